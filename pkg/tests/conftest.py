from pathlib import Path

import pytest

from rgspec.dsl import load

CORPUS = Path(__file__).resolve().parents[1] / "src" / "rgspec" / "corpus"
DATA = Path(__file__).resolve().parent / "data"


def corpus(name: str):
    return load(CORPUS / name)


@pytest.fixture(scope="session")
def gcd_spec():
    return corpus("gcd.rg")


@pytest.fixture(scope="session")
def counter_spec():
    return corpus("counter.rg")


@pytest.fixture(scope="session")
def min_spec():
    return corpus("min.rg")


@pytest.fixture(scope="session")
def cruise_spec():
    return corpus("cruise.rg")


# acceptance criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
