"""``rgspec`` command line.

Exit status: 0 when every check passes, 1 when a check fails (or could not
be completed), 2 on usage, parse or validation errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import checker as ck
from .diagrams import DiagramError, load_diagrams, to_dot, validate_diagram
from .dsl import format_expr, load, parse_predicate, pretty_print
from .errors import EnumerationCapExceeded, RGSpecError
from .model import check_complementarity, check_layer_monotonicity
from .predicates import DEFAULT_CAP, conj, show_value
from .runtime import (
    Exhaustive,
    RandomScheduler,
    RoundRobin,
    _json_value,
    enumerate_traces,
    run,
    trace_to_lines,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "), ensure_ascii=False)


class Out:
    """Collects report lines; colour only for human output and RGSPEC_COLOR=1."""

    def __init__(self, fmt: str):
        self.fmt = fmt
        self.lines: list[str] = []
        self.color = fmt == "human" and os.environ.get("RGSPEC_COLOR", "0") == "1"
        if fmt == "structured":
            self.json({"schema": ck.REPORT_SCHEMA})

    def json(self, obj):
        self.lines.append(_dump(obj))

    def text(self, line: str = ""):
        self.lines.append(line)

    def verdict(self, word: str) -> str:
        if not self.color:
            return word
        code = "32" if word in ("PASS", "HOLDS", "ALL_PASS") else "31"
        return f"\x1b[{code}m{word}\x1b[0m"

    def render(self) -> str:
        return "\n".join(self.lines) + "\n"


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _nonneg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative: {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rgspec",
        description="Check layered rely/guarantee conditions by simulation and exhaustive exploration.",
        epilog="exit status: 0 all checks pass, 1 a check failed, 2 usage or input error. "
        "RGSPEC_COLOR=1 colours human-readable verdicts.",
    )
    sub = p.add_subparsers(dest="mode", metavar="MODE", required=True)

    def common(sp, spec=True):
        sp.add_argument("file", help="spec (.rg) or diagram (.pf) file" if not spec else "spec file (.rg)")
        sp.add_argument("-o", "--output", metavar="PATH", help="write the report here instead of stdout")
        sp.add_argument(
            "--format", choices=("human", "structured"), default="human", help="report format (default human)"
        )
        if spec:
            sp.add_argument("--budget", type=_nonneg, metavar="K", help="override every injector budget")
            sp.add_argument(
                "--atomicity", choices=("statement", "block"), help="override the atomicity declared in the file"
            )

    def initial(sp):
        sp.add_argument(
            "--pairs",
            "--where",
            dest="where",
            metavar="EXPR",
            help="restrict initial states to those satisfying EXPR, e.g. \"a+b<=8\"",
        )
        sp.add_argument(
            "--set",
            dest="sets",
            action="append",
            default=[],
            metavar="VAR=VALUE",
            help="fix a variable in the initial state (repeatable)",
        )

    c = sub.add_parser("check", help="verify every trace from every initial state")
    common(c)
    initial(c)
    strat = c.add_mutually_exclusive_group()
    strat.add_argument("--exhaustive", action="store_true", help="explore every interleaving (default)")
    strat.add_argument("--random", type=_positive, metavar="N", help="N seeded random runs per initial state")
    strat.add_argument("--round-robin", action="store_true", help="one round-robin run per initial state")
    c.add_argument("--depth", type=_positive, default=200, help="exhaustive depth bound in atomic steps (default 200)")
    c.add_argument("--seed", type=int, help="seed for --random (required with it)")
    c.add_argument(
        "--injector-weight", type=float, default=0.1, help="probability of picking an enabled injector (default 0.1)"
    )
    c.add_argument("--step-cap", type=_positive, default=1000, help="step cap per simulated run (default 1000)")
    c.add_argument("--node-cap", type=_positive, default=2_000_000, help="configuration cap for --exhaustive")

    r = sub.add_parser("run", help="simulate one schedule from one initial state")
    common(r)
    initial(r)
    rs = r.add_mutually_exclusive_group()
    rs.add_argument("--round-robin", action="store_true", help="round-robin scheduling (default)")
    rs.add_argument("--random", action="store_true", help="seeded random scheduling")
    r.add_argument("--seed", type=int, help="seed for --random (required with it)")
    r.add_argument("--injector-weight", type=float, default=0.1, help="probability of picking an enabled injector")
    r.add_argument("--step-cap", type=_positive, default=1000, help="step cap (default 1000)")

    e = sub.add_parser("enumerate", help="list every interleaving from one initial state")
    common(e)
    initial(e)
    e.add_argument("--depth", type=_positive, default=64, help="depth bound in atomic steps (default 64)")
    e.add_argument("--cap", type=_positive, default=100_000, help="maximum number of traces")

    lay = sub.add_parser("layers", help="check that relies weaken down each process's layer list")
    common(lay)
    lay.add_argument("--cap", type=_positive, default=DEFAULT_CAP, help="two-epoch enumeration cap")

    cm = sub.add_parser("complement", help="check that environment guarantees imply each rely")
    common(cm)
    cm.add_argument("--cap", type=_positive, default=DEFAULT_CAP, help="two-epoch enumeration cap")

    d = sub.add_parser("dot", help="validate a diagram file and export it as DOT")
    common(d, spec=False)
    d.add_argument("--diagram", metavar="NAME", help="export only this diagram")

    f = sub.add_parser("fmt", help="print the file in canonical form")
    common(f)
    return p


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------


def _load_spec(args):
    spec = load(args.file)
    if args.budget is not None:
        spec = spec.with_budget(args.budget)
    if args.atomicity is not None:
        spec = spec.with_atomicity(args.atomicity)
    return spec


def _where(args, spec):
    parts = []
    if getattr(args, "where", None):
        parts.append(parse_predicate(args.where, spec.decl, "--pairs"))
    for item in getattr(args, "sets", []):
        if "=" not in item:
            raise UsageError(f"--set expects VAR=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        name = name.strip()
        if name not in spec.decl:
            raise UsageError(f"--set: undeclared variable {name}")
        parts.append(parse_predicate(f"{name} = {value}", spec.decl, "--set"))
    return conj(parts) if parts else None


def _first_initial(spec, args):
    states = ck.initial_states(spec, _where(args, spec))
    if not states:
        raise UsageError("no initial state satisfies the init constraint and the given restrictions")
    return states[0]


def _header(out: Out, args, spec, **extra):
    name = Path(args.file).name
    budgets = {i.id: i.budget for i in spec.injectors}
    if out.fmt == "structured":
        out.json(
            {
                "mode": args.mode,
                "spec": name,
                "atomicity": spec.atomicity,
                "budgets": budgets,
                **{k: v for k, v in extra.items() if v is not None},
            }
        )
        return
    np_, ni = len(spec.processes), len(spec.injectors)
    out.text(
        f"spec {name}: {np_} process{'es' if np_ != 1 else ''}, {ni} injector{'s' if ni != 1 else ''}, "
        f"{spec.atomicity} atomicity"
    )
    for k, v in budgets.items():
        out.text(f"  injector {k} budget {v}")
    for k, v in extra.items():
        if v is not None:
            out.text(f"{k} {v}")


def _state_text(decl, values) -> str:
    return " ".join(f"{decl.display(n)}={show_value(v)}" for n, v in zip(decl.names, values))


def _human_trace(out: Out, trace, decl):
    out.text(f"  initial  {_state_text(decl, trace.initial.values)}")
    for i, t in enumerate(trace.transitions):
        changes = ", ".join(
            f"{decl.display(n)}: {show_value(t.before[n])} -> {show_value(t.after[n])}" for n in t.before.changed(t.after)
        ) or "no change"
        where = f"  at {t.span}" if t.span else ""
        out.text(f"  #{i:<4} {t.actor:<6} {changes}{where}")
    if trace.lasso is not None:
        out.text(f"  loops back to the configuration before step #{trace.lasso}")
    if trace.fault is not None:
        out.text(f"  fault in {trace.fault_actor}: {trace.fault}" + (f" at {trace.fault_span}" if trace.fault_span else ""))
    out.text(f"  end {trace.end}")


def _emit_trace_report(out: Out, rep):
    if out.fmt == "structured":
        procs = {
            pid: {
                "pre": pv.pre,
                "layer": pv.active_layer if pv.active_layer is not None else ck.RELY_BROKEN,
                "guarantee": pv.guarantee,
                "post": pv.post,
            }
            for pid, pv in rep.processes.items()
        }
        out.json({"processes": procs, "injectors": rep.injector_guarantee, "flags": sorted(rep.flags)})
    else:
        for line in ck.format_trace_report(rep):
            out.text("  " + line)


def mode_check(args, out: Out) -> int:
    spec = _load_spec(args)
    where = _where(args, spec)
    if args.random is not None:
        if args.seed is None:
            raise UsageError("--random needs --seed")
        if not 0.0 <= args.injector_weight <= 1.0:
            raise UsageError("--injector-weight must lie in [0, 1]")
        strategy = ck.RandomRuns(args.random, args.seed, args.injector_weight, args.step_cap)
    elif args.round_robin:
        strategy = ck.RoundRobinRun(args.step_cap)
    else:
        strategy = Exhaustive(args.depth)
    _header(out, args, spec, strategy=str(strategy), restrict=format_expr(where) if where is not None else None)
    try:
        rep = ck.verify_system(spec, strategy, where=where, node_cap=args.node_cap)
    except EnumerationCapExceeded as exc:
        rep = ck.SystemReport("INCOMPLETE", str(strategy), note=str(exc))
    summary = {
        "status": rep.status,
        "initial_states": rep.initial_states,
        "rejected_by_pre": rep.rejected,
        "configurations": rep.nodes,
        "transitions": rep.edges,
        "depth_bound_hits": rep.truncated,
        "runs": rep.traces,
        "findings": dict(sorted(rep.findings.items())),
    }
    if rep.note:
        summary["note"] = rep.note
    if out.fmt == "structured":
        out.json(summary)
    else:
        out.text(f"initial states {rep.initial_states} ({rep.rejected} rejected by pre)")
        if isinstance(strategy, Exhaustive):
            out.text(f"explored {rep.nodes} configurations, {rep.edges} transitions, {rep.truncated} at the depth bound")
        else:
            out.text(f"simulated {rep.traces} runs")
        if rep.findings:
            out.text("findings " + ", ".join(f"{k}={v}" for k, v in sorted(rep.findings.items())))
        if rep.note:
            out.text(f"note: {rep.note}")
        out.text(f"result {out.verdict(rep.status)}")
    if rep.counterexample is not None:
        if out.fmt == "structured":
            out.json({"counterexample": rep.reason})
            out.lines.extend(trace_to_lines(rep.counterexample))
        else:
            out.text(f"counterexample ({rep.reason}):")
            _human_trace(out, rep.counterexample, spec.decl)
        _emit_trace_report(out, rep.counterexample_report)
    return EXIT_OK if rep.status == ck.PASS else EXIT_FAIL


def mode_run(args, out: Out) -> int:
    spec = _load_spec(args)
    if args.random:
        if args.seed is None:
            raise UsageError("--random needs --seed")
        if not 0.0 <= args.injector_weight <= 1.0:
            raise UsageError("--injector-weight must lie in [0, 1]")
        sched = RandomScheduler(args.seed, args.injector_weight)
    else:
        sched = RoundRobin()
    state = _first_initial(spec, args)
    _header(out, args, spec, scheduler=str(sched))
    trace = run(spec, sched, state, args.step_cap)
    rep = ck.check_trace(trace, spec)
    if out.fmt == "structured":
        out.lines.extend(trace_to_lines(trace))
    else:
        _human_trace(out, trace, spec.decl)
    _emit_trace_report(out, rep)
    return EXIT_OK if rep.ok else EXIT_FAIL


def mode_enumerate(args, out: Out) -> int:
    spec = _load_spec(args)
    state = _first_initial(spec, args)
    _header(out, args, spec, depth=args.depth)
    traces = enumerate_traces(spec, state, args.depth, args.cap)
    failed = 0
    if out.fmt == "human":
        out.text(f"initial  {_state_text(spec.decl, state.values)}")
    else:
        out.json({"initial": {n: _json_value(v) for n, v in state.items()}})
    for i, t in enumerate(traces):
        rep = ck.check_trace(t, spec)
        failed += not rep.ok
        if out.fmt == "structured":
            out.json(
                {
                    "trace": i,
                    "end": t.end,
                    "steps": len(t.transitions),
                    "choices": list(t.choices),
                    "final": {n: _json_value(v) for n, v in t.final.items()},
                    "flags": sorted(rep.flags),
                }
            )
        else:
            out.text(
                f"trace {i}: {t.end} after {len(t.transitions)} steps, final {_state_text(spec.decl, t.final.values)}"
                f" [{' '.join(sorted(rep.flags))}]"
            )
    if out.fmt == "structured":
        out.json({"traces": len(traces), "failed": failed})
    else:
        out.text(f"{len(traces)} traces, {failed} failing")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def _witness(decl, pair):
    before, after = pair
    if before.values == after.values:
        return {"state": {n: _json_value(v) for n, v in before.items()}}
    return {
        "before": {n: _json_value(v) for n, v in before.items()},
        "after": {n: _json_value(v) for n, v in after.items()},
    }


def _witness_text(decl, pair) -> str:
    before, after = pair
    return f"before {_state_text(decl, before.values)} / after {_state_text(decl, after.values)}"


def mode_layers(args, out: Out) -> int:
    spec = _load_spec(args)
    _header(out, args, spec)
    ok = True
    for p in spec.processes:
        v = check_layer_monotonicity(p, spec.decl, args.cap)
        ok &= v.holds
        if out.fmt == "structured":
            rec = {"process": p.id, "layers": [l.name for l in p.layers], "verdict": v.verdict}
            if not v.holds:
                rec["stronger"] = p.layers[v.stronger].name
                rec["weaker"] = p.layers[v.weaker].name
                rec["witness"] = _witness(spec.decl, v.witness)
            out.json(rec)
        else:
            names = " > ".join(l.name for l in p.layers)
            out.text(f"process {p.id} [{names}]: {out.verdict(v.verdict)}")
            if not v.holds:
                out.text(
                    f"  rely of {p.layers[v.stronger].name} does not imply rely of {p.layers[v.weaker].name}:"
                    f" {_witness_text(spec.decl, v.witness)}"
                )
    return EXIT_OK if ok else EXIT_FAIL


def mode_complement(args, out: Out) -> int:
    spec = _load_spec(args)
    _header(out, args, spec)
    verdicts = check_complementarity(spec, args.cap)
    for v in verdicts:
        if out.fmt == "structured":
            rec = {"process": v.process, "layer": v.layer_name, "verdict": v.verdict, "pairs_checked": v.checked}
            if not v.holds:
                rec["actor"] = v.actor
                rec["witness"] = _witness(spec.decl, v.witness)
            out.json(rec)
        else:
            out.text(f"process {v.process} layer {v.layer_name}: {out.verdict(v.verdict)}")
            if not v.holds:
                out.text(f"  guarantee of {v.actor} allows {_witness_text(spec.decl, v.witness)}")
    return EXIT_OK if all(v.holds for v in verdicts) else EXIT_FAIL


def mode_dot(args, out: Out) -> int:
    diagrams = load_diagrams(args.file)
    if args.diagram:
        diagrams = [d for d in diagrams if d.name == args.diagram]
        if not diagrams:
            raise UsageError(f"no diagram named {args.diagram}")
    bad = False
    dots = []
    for d in diagrams:
        diags = validate_diagram(d)
        if diags:
            bad = True
            for x in diags:
                print(f"{d.name}: {x}", file=sys.stderr)
        else:
            dots.append(to_dot(d))
    if bad:
        out.lines = []
        return EXIT_FAIL
    out.lines = ["\n".join(dots).rstrip("\n")]
    return EXIT_OK


def mode_fmt(args, out: Out) -> int:
    spec = _load_spec(args)
    out.lines = [pretty_print(spec).rstrip("\n")]
    return EXIT_OK


MODES = {
    "check": mode_check,
    "run": mode_run,
    "enumerate": mode_enumerate,
    "layers": mode_layers,
    "complement": mode_complement,
    "dot": mode_dot,
    "fmt": mode_fmt,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: --help exits 0, usage errors 2
        return int(exc.code or 0)
    out = Out(args.format)
    try:
        code = MODES[args.mode](args, out)
    except UsageError as exc:
        print(f"rgspec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EnumerationCapExceeded as exc:
        print(f"rgspec: incomplete: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (RGSpecError, DiagramError) as exc:
        for d in getattr(exc, "diagnostics", None) or [exc]:
            print(f"rgspec: error: {d}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"rgspec: error: {exc.strerror or exc}: {exc.filename or args.file}", file=sys.stderr)
        return EXIT_USAGE
    text = out.render() if out.lines else ""
    if args.output:
        try:
            Path(args.output).write_text(text, encoding="utf-8")
        except OSError as exc:
            print(f"rgspec: error: cannot write {args.output}: {exc.strerror}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
