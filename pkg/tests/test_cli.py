import os
import subprocess
import sys

import pytest

from rgspec.cli import build_parser, main

from conftest import CORPUS, DATA

GOLDEN = DATA / "golden"

# (golden name, argv after the file is substituted); all structured output
CASES = [
    ("check_min", ["check", "min.rg"]),
    ("check_gcd_small", ["check", "gcd.rg", "--exhaustive", "--pairs", "a+b<=8", "--depth", "64"]),
    ("check_gcd_random", ["check", "gcd.rg", "--random", "3", "--seed", "1"]),
    ("check_gcd_rr", ["check", "gcd.rg", "--round-robin"]),
    ("check_counter", ["check", "counter.rg", "--budget", "2"]),
    ("check_counter_literal", ["check", "counter_literal.rg", "--atomicity", "block", "--budget", "1"]),
    ("check_cruise", ["check", "cruise.rg"]),
    ("check_rogue", ["check", "negative/counter_rogue_injector.rg"]),
    ("layers_counter", ["layers", "counter.rg"]),
    ("layers_cruise", ["layers", "cruise.rg"]),
    ("layers_swapped", ["layers", "negative/cruise_swapped.rg"]),
    ("complement_min", ["complement", "min.rg"]),
    ("complement_gcd", ["complement", "gcd.rg"]),
    ("complement_counter", ["complement", "counter.rg"]),
    ("complement_cruise", ["complement", "cruise.rg"]),
    ("complement_weak", ["complement", "negative/counter_weak_injector.rg"]),
    ("run_counter", ["run", "counter.rg", "--random", "--seed", "3", "--injector-weight", "0.5", "--set", "n=4"]),
    ("enumerate_gcd", ["enumerate", "gcd.rg", "--set", "a=2", "--set", "b=4"]),
]

EXPECTED_EXIT = {"check_counter_literal": 1, "check_rogue": 1, "layers_swapped": 1, "complement_weak": 1}


def invoke(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def structured(case_argv):
    mode, name, *rest = case_argv
    return [mode, str(CORPUS / name), "--format", "structured", *rest]


@pytest.mark.parametrize("name, argv", CASES, ids=[c[0] for c in CASES])
def test_golden_reports(name, argv, capsys):
    code, out, err = invoke(structured(argv), capsys)
    assert code == EXPECTED_EXIT.get(name, 0), err
    path = GOLDEN / f"{name}.jsonl"
    if os.environ.get("RGSPEC_REGEN") == "1":
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(out, encoding="utf-8")
    assert out == path.read_text(encoding="utf-8")
    code2, out2, _ = invoke(structured(argv), capsys)
    assert (code2, out2) == (code, out)


def test_golden_dot(tmp_path, capsys):
    target = tmp_path / "out.dot"
    code, out, _ = invoke(["dot", str(CORPUS / "monitor.pf"), "-o", str(target)], capsys)
    assert code == 0 and out == ""
    path = GOLDEN / "monitor.dot"
    if os.environ.get("RGSPEC_REGEN") == "1":
        path.write_text(target.read_text())
    assert target.read_bytes() == path.read_bytes()


# -- exit codes -----------------------------------------------------------------------


def test_gcd_small_check_exits_zero(capsys):
    code, out, _ = invoke(["check", str(CORPUS / "gcd.rg"), "--exhaustive", "--pairs", "a+b<=8", "--depth", "64"], capsys)
    assert code == 0 and "result PASS" in out


def test_literal_counter_reports_livelock(capsys):
    code, out, _ = invoke(["check", str(CORPUS / "counter_literal.rg"), "--atomicity", "block", "--budget", "1"], capsys)
    assert code == 1 and "counterexample (LIVELOCK)" in out and "loops back" in out


def test_dot_selects_one_diagram(capsys):
    code, out, _ = invoke(["dot", str(CORPUS / "monitor.pf"), "--diagram", "WardProblem"], capsys)
    assert code == 0 and out.count("digraph") == 1 and "style=dashed" in out
    code, _, err = invoke(["dot", str(CORPUS / "monitor.pf"), "--diagram", "Nope"], capsys)
    assert code == 2 and "no diagram named Nope" in err


def test_invalid_diagram_exits_one(tmp_path, capsys):
    f = tmp_path / "bad.pf"
    f.write_text('context diagram X { machine M; requirement R; }')
    code, out, err = invoke(["dot", str(f)], capsys)
    assert code == 1 and out == "" and "requirement in a context diagram" in err


@pytest.mark.parametrize(
    "argv, message",
    [
        (["check", "missing.rg"], "No such file"),
        (["check", "{gcd}", "--random", "2"], "--random needs --seed"),
        (["check", "{gcd}", "--set", "a"], "VAR=VALUE"),
        (["check", "{gcd}", "--set", "z=1"], "undeclared variable z"),
        (["check", "{gcd}", "--pairs", "a +"], "error"),
        (["run", "{gcd}", "--pairs", "a > 20"], "no initial state"),
        (["check", "{gcd}", "--random", "2", "--seed", "1", "--injector-weight", "2"], "[0, 1]"),
    ],
)
def test_usage_errors_exit_two(argv, message, capsys):
    argv = [a.replace("{gcd}", str(CORPUS / "gcd.rg")) for a in argv]
    code, out, err = invoke(argv, capsys)
    assert code == 2 and message in err and "Traceback" not in err


@pytest.mark.parametrize("argv", [[], ["check"], ["frobnicate", "x"], ["check", "x.rg", "--depth", "0"],
                                  ["check", "x.rg", "--budget", "-1"], ["check", "x.rg", "--random", "2", "--round-robin"]])
def test_argparse_errors_exit_two(argv, capsys):
    assert main(argv) == 2


def test_parse_errors_are_reported_with_location(tmp_path, capsys):
    f = tmp_path / "broken.rg"
    f.write_text("state { x: int[0..3]; }\ninit (x = 0;\n")
    code, _, err = invoke(["check", str(f)], capsys)
    assert code == 2 and "broken.rg:2:" in err


def test_validation_errors_are_all_listed(tmp_path, capsys):
    f = tmp_path / "dup.rg"
    f.write_text(
        "state { x: int[0..3]; }\ninit x = 0;\n"
        "process P { layer L { rely true; guarantee true; } body { y := 1 } }\n"
        "process P { layer L { rely true; guarantee true; } body { skip } }\n"
    )
    code, _, err = invoke(["check", str(f)], capsys)
    assert code == 2 and err.count("rgspec: error:") >= 2


def test_node_cap_is_incomplete(capsys):
    code, out, _ = invoke(["check", str(CORPUS / "gcd.rg"), "--node-cap", "10"], capsys)
    assert code == 1 and "INCOMPLETE" in out


def test_enumeration_cap_exits_one(capsys):
    code, _, err = invoke(["enumerate", str(CORPUS / "gcd.rg"), "--set", "a=7", "--set", "b=5", "--cap", "2"], capsys)
    assert code == 1 and "incomplete" in err


def test_unwritable_output(capsys):
    code, _, err = invoke(["fmt", str(CORPUS / "min.rg"), "-o", "/nonexistent/dir/x"], capsys)
    assert code == 2 and "cannot write" in err


# -- other modes ---------------------------------------------------------------------------


def test_fmt_round_trips(capsys, tmp_path):
    code, out, _ = invoke(["fmt", str(CORPUS / "counter.rg")], capsys)
    assert code == 0
    f = tmp_path / "again.rg"
    f.write_text(out)
    code, out2, _ = invoke(["fmt", str(f)], capsys)
    assert out2 == out


def test_human_reports(capsys):
    code, out, _ = invoke(["run", str(CORPUS / "gcd.rg"), "--set", "a=12", "--set", "b=8"], capsys)
    assert code == 0 and "end TERMINATED" in out
    code, out, _ = invoke(["layers", str(CORPUS / "negative/cruise_swapped.rg")], capsys)
    assert code == 1 and "does not imply" in out
    code, out, _ = invoke(["complement", str(CORPUS / "negative/counter_weak_injector.rg")], capsys)
    assert code == 1 and "guarantee of EI allows" in out


def test_colour_only_on_request(capsys, monkeypatch):
    argv = ["complement", str(CORPUS / "min.rg")]
    _, plain, _ = invoke(argv, capsys)
    assert "\x1b[" not in plain
    monkeypatch.setenv("RGSPEC_COLOR", "1")
    _, coloured, _ = invoke(argv, capsys)
    assert "\x1b[32mHOLDS\x1b[0m" in coloured
    _, structured_out, _ = invoke(argv + ["--format", "structured"], capsys)
    assert "\x1b[" not in structured_out


# -- help -------------------------------------------------------------------------------------


def _flags(parser):
    out = {}
    for action in parser._subparsers._group_actions[0].choices.items():
        mode, sp = action
        out[mode] = [s for a in sp._actions for s in a.option_strings if s not in ("-h", "--help")]
    return out


@pytest.mark.parametrize("mode", ["check", "run", "enumerate", "layers", "complement", "dot", "fmt"])
def test_help_documents_every_flag(mode, capsys):
    assert main([mode, "--help"]) == 0
    text = capsys.readouterr().out
    for flag in _flags(build_parser())[mode]:
        assert flag in text


def test_top_level_help(capsys):
    assert main(["--help"]) == 0
    text = capsys.readouterr().out
    for mode in ("check", "run", "enumerate", "layers", "complement", "dot", "fmt", "RGSPEC_COLOR"):
        assert mode in text


def test_cli_flags_are_documented():
    doc = (CORPUS.parents[2] / "docs" / "cli.md").read_text()
    for mode, flags in _flags(build_parser()).items():
        assert f"rgspec {mode}" in doc
        for flag in flags:
            assert flag in doc, (mode, flag)


def test_module_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "rgspec", "check", str(CORPUS / "min.rg"), "--format", "structured"],
        capture_output=True, text=True, check=False,
    )
    assert out.returncode == 0
    assert out.stdout == (GOLDEN / "check_min.jsonl").read_text()
