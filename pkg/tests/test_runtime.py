import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rgspec.dsl import parse
from rgspec.model import FaultKind, validate_system
from rgspec.predicates import eval_predicate, eval_state_predicate
from rgspec.runtime import (
    INJECTION,
    TERMINATED,
    Machine,
    RandomScheduler,
    RoundRobin,
    enumerate_traces,
    make_injector,
    run,
    serialize_trace,
    step,
)

from conftest import corpus
from oracles import counter_plain, euclid

TWO = """state { x: int[0..3]; y: int[0..3]; }
init x = 0 and y = 0;
process A { layer L { rely true; guarantee true; } body { x := 1 } }
process B { layer L { rely true; guarantee true; } body { y := 1 } }
"""

ONE_PLUS_INJECTOR = """state { x: int[0..3]; y: int[0..3]; }
init x = 0 and y = 0;
process A { layer L { rely true; guarantee true; } body { x := 1 } }
injector E { kinds fake; enabling true; guarantee x = old(x); budget 1; body { y := 3 } }
"""


@pytest.fixture(scope="module")
def gcd_wide():
    """gcd.rg on a carrier wide enough to hold 18."""
    from conftest import CORPUS

    return parse((CORPUS / "gcd.rg").read_text().replace("int[1..12]", "int[1..20]"))


def check_invariants(trace, sys):
    prev = trace.initial
    for t in trace.transitions:
        assert t.before == prev
        for name in t.before.changed(t.after):
            assert name in t.writes, (t, name)
        prev = t.after
    for inj in sys.injectors:
        assert trace.injections().get(inj.id, 0) <= inj.budget


# -- step -------------------------------------------------------------------------


def test_gcd_guard_steps_leave_state_unchanged(gcd_wide):
    m = Machine(gcd_wide)
    s = gcd_wide.decl.state(a=12, b=18)
    c0 = m.initial_control()
    t1 = step(gcd_wide, c0, s, "P1")  # a != b: true
    assert t1.after == s
    t2 = step(gcd_wide, t1.control, s, "P1")  # a > b: false, back to the loop head
    assert t2.after == s
    assert t2.control[0][0] == c0[0][0]


def test_counter_injector_body_increments(counter_spec):
    m = Machine(counter_spec)
    s = counter_spec.decl.state(n=5, n_p=3, count=2)
    t = step(counter_spec, m.initial_control(), s, "EI")
    assert t.after["n_p"] == 4 and t.kind == INJECTION


def test_terminated_actor_returns_terminated():
    sys = parse(TWO)
    s = sys.decl.state(x=0, y=0)
    t = step(sys, Machine(sys).initial_control(), s, "A")
    assert step(sys, t.control, t.after, "A") == TERMINATED


def test_out_of_range_assignment_faults():
    sys = parse(TWO.replace("x := 1", "x := x + 5"))
    trace = run(sys, RoundRobin(), sys.decl.state(x=0, y=0))
    assert trace.end == "FAULTED" and trace.fault_actor == "A"
    assert trace.fault_span.line == 3


# -- run ----------------------------------------------------------------------------


def test_gcd_round_robin_12_18(gcd_wide):
    trace = run(gcd_wide, RoundRobin(), gcd_wide.decl.state(a=12, b=18))
    assert trace.final["a"] == trace.final["b"] == euclid(12, 18) == 6
    assert set(trace.status.values()) == {TERMINATED}


def test_counter_budget_zero_matches_plain_oracle(counter_spec):
    spec = counter_spec.with_budget(0)
    trace = run(spec, RoundRobin(), spec.decl.state(n=5, n_p=0, count=0))
    assert (trace.final["count"], trace.final["n_p"]) == counter_plain(5) == (5, 0)


def test_counter_random_with_faults_still_counts(counter_spec):
    spec = counter_spec.with_budget(2)
    trace = run(spec, RandomScheduler(1, 0.5), spec.decl.state(n=5, n_p=0, count=0))
    assert trace.final["count"] == 5 and trace.final["n_p"] == 0
    check_invariants(trace, spec)


def test_random_is_reproducible(counter_spec):
    spec = counter_spec.with_budget(3)
    s = spec.decl.state(n=6, n_p=0, count=0)
    a = serialize_trace(run(spec, RandomScheduler(42, 0.3), s))
    b = serialize_trace(run(spec, RandomScheduler(42, 0.3), s))
    assert a == b


def test_step_cap_hit_on_long_run(counter_spec):
    trace = run(counter_spec.with_budget(0), RoundRobin(), counter_spec.decl.state(n=8, n_p=0, count=0), step_cap=5)
    assert trace.end == "STEP_BOUND_HIT" and trace.status["C"] == "STEP_BOUND_HIT"


def test_run_rejects_bad_arguments(counter_spec):
    s = counter_spec.decl.state(n=1, n_p=0, count=0)
    with pytest.raises(ValueError):
        run(counter_spec, RoundRobin(), s, step_cap=0)
    with pytest.raises(ValueError):
        RandomScheduler(1, 1.5)


# -- enumeration ---------------------------------------------------------------------


def test_two_single_step_actors_give_two_traces():
    sys = parse(TWO)
    traces = enumerate_traces(sys, sys.decl.state(x=0, y=0), depth=5)
    assert sorted(t.choices for t in traces) == [("A", "B"), ("B", "A")]


def test_actor_plus_injector_gives_three_traces():
    sys = parse(ONE_PLUS_INJECTOR)
    traces = enumerate_traces(sys, sys.decl.state(x=0, y=0), depth=5)
    assert sorted(t.choices for t in traces) == [("A",), ("A", "E"), ("E", "A")]


def test_gcd_2_4_all_traces_end_at_2(gcd_spec):
    traces = enumerate_traces(gcd_spec, gcd_spec.decl.state(a=2, b=4), depth=64)
    done = [t for t in traces if t.end == "TERMINATED"]
    assert done and all(t.final["a"] == t.final["b"] == euclid(2, 4) for t in done)
    for t in traces:
        check_invariants(t, gcd_spec)


def test_choice_sequences_are_unique(counter_spec):
    traces = enumerate_traces(counter_spec.with_budget(1), counter_spec.decl.state(n=2, n_p=0, count=0), depth=40)
    seqs = [t.choices for t in traces]
    assert len(seqs) == len(set(seqs))


def test_budget_zero_equals_injector_free(counter_spec):
    from dataclasses import replace

    s = counter_spec.decl.state(n=3, n_p=0, count=0)
    inert = enumerate_traces(counter_spec.with_budget(0), s, depth=60)
    free = enumerate_traces(replace(counter_spec, injectors=()), s, depth=60)
    assert {t.choices for t in inert} == {t.choices for t in free}


def test_enumeration_cap(gcd_spec):
    from rgspec.errors import EnumerationCapExceeded

    with pytest.raises(EnumerationCapExceeded):
        enumerate_traces(gcd_spec, gcd_spec.decl.state(a=7, b=5), depth=64, cap=3)


def test_frame_property_on_every_enumerated_counter_transition(counter_spec):
    for n in range(4):
        for t in enumerate_traces(counter_spec.with_budget(2), counter_spec.decl.state(n=n, n_p=0, count=0), 60):
            check_invariants(t, counter_spec.with_budget(2))


# -- injector templates ----------------------------------------------------------------


def test_lost_update_template_matches_shipped_injector(counter_spec):
    ei = make_injector(FaultKind.LOST_UPDATE, "n_p", counter_spec.decl, 1)
    shipped = counter_spec.injectors[0]
    assert ei.guarantee == shipped.guarantee
    assert ei.body == shipped.body
    assert ei.kinds == shipped.kinds


def test_lost_update_enabling_is_equivalent(counter_spec):
    ei = make_injector(FaultKind.LOST_UPDATE, "n_p", counter_spec.decl, 1)
    for s in counter_spec.decl.states():
        assert eval_state_predicate(ei.enabling, s) == eval_state_predicate(counter_spec.injectors[0].enabling, s)


def test_fake_update_on_sensor(cruise_spec):
    ei = make_injector(FaultKind.FAKE_UPDATE, "sensor", cruise_spec.decl, 1, value="ERROR")
    shipped = cruise_spec.injectors[0]
    assert ei.body == shipped.body
    from rgspec.predicates import implies_on_domain

    assert implies_on_domain(ei.guarantee, shipped.guarantee, cruise_spec.decl).holds
    assert implies_on_domain(shipped.guarantee, ei.guarantee, cruise_spec.decl).holds


def test_fake_injections_frame_everything_else(cruise_spec):
    s = cruise_spec.decl.state(target=3, current=1, delta=2, sensor="OK", engine="ON")
    for t in enumerate_traces(cruise_spec, s, depth=40):
        for tr in t.transitions:
            if tr.kind == INJECTION:
                assert tr.before.changed(tr.after) == ["sensor"]
                assert eval_predicate(cruise_spec.injectors[0].guarantee, tr.pair)


def test_template_errors(counter_spec):
    with pytest.raises(KeyError):
        make_injector(FaultKind.FAKE_UPDATE, "zz", counter_spec.decl, 1)
    with pytest.raises(ValueError):
        make_injector(FaultKind.FAKE_UPDATE, "n", counter_spec.decl, 1, value=99)


DUP = """state { x: int[0..20]; }
init x = 0;
process P { layer L { rely true; guarantee true; } body { x := x + 3 } }
injector D { kinds dup; enabling true; guarantee true; budget 2; body { redo x } }
"""


def test_duplicated_update_twice_equals_doubled_delta():
    sys = parse(DUP)
    assert validate_system(sys) == []
    m = Machine(sys)
    c, v = m.initial_control(), (0,)
    c, v, *_ = m.step(c, v, 0)  # x := 3
    c, v, *_ = m.step(c, v, 1)
    c, v, *_ = m.step(c, v, 1)
    assert v == (3 + 2 * 3,)


def test_duplicated_update_before_any_write_is_a_no_op():
    sys = parse(DUP)
    m = Machine(sys)
    _, v, *_ = m.step(m.initial_control(), (0,), 1)
    assert v == (0,)


def test_make_injector_dup_builds_redo(counter_spec):
    ei = make_injector(FaultKind.DUPLICATED_UPDATE, "count", counter_spec.decl, 2)
    assert ei.budget == 2 and type(ei.body[0]).__name__ == "Redo"


# -- the recovery invariant discussed for the counter ------------------------------------


def test_literal_recovery_establishes_sum_n_minus_one():
    spec = corpus("counter_literal.rg")
    s = spec.decl.state(n=4, n_p=0, count=0)
    seen = 0
    for t in enumerate_traces(spec, s, depth=30):
        for tr in t.transitions:
            if tr.span and tr.span.line == 36 and tr.actor == "C":  # the recovery assignment
                a = tr.after
                assert a["n_p"] == a["n"] - a["count"] - 1
                seen += 1
    assert seen


def test_mid_iteration_sum_is_n_minus_one(counter_spec):
    spec = counter_spec.with_budget(0)
    trace = run(spec, RoundRobin(), spec.decl.state(n=4, n_p=0, count=0))
    mids = [t.after for t in trace.transitions if t.before["n_p"] - 1 == t.after["n_p"]]
    assert mids and all(s["n_p"] + s["count"] == s["n"] - 1 for s in mids)


# -- serialization ------------------------------------------------------------------------


def test_trace_lines_are_json_with_fixed_field_order(counter_spec):
    trace = run(counter_spec, RandomScheduler(3, 0.5), counter_spec.decl.state(n=2, n_p=0, count=0))
    lines = serialize_trace(trace).splitlines()
    assert list(json.loads(lines[0])) == ["initial"]
    for i, line in enumerate(lines[1:-1]):
        rec = json.loads(line)
        assert list(rec) == ["index", "actor", "kind", "changed", "span"] and rec["index"] == i
    assert list(json.loads(lines[-1]))[:2] == ["end", "status"]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 8), st.integers(0, 3), st.integers(0, 10_000))
def test_random_runs_respect_invariants(n, k, seed):
    spec = corpus("counter.rg").with_budget(k)
    trace = run(spec, RandomScheduler(seed, 0.4), spec.decl.state(n=n, n_p=0, count=0))
    check_invariants(trace, spec)
    assert trace.end == "TERMINATED"
    assert trace.final["count"] == n and trace.final["n_p"] == 0
