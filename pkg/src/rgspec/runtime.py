"""Interleaving semantics: one atomic unit per transition, schedulers,
bounded exhaustive trace enumeration and error-injector templates."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .errors import EnumerationCapExceeded, EvalError, SourceSpan
from .model import FaultKind, InjectorSpec, SystemSpec
from .predicates import (
    TRUE,
    BoolLit,
    BoolType,
    Compare,
    Decl,
    EnumType,
    IntLit,
    IntType,
    SetLit,
    SetType,
    State,
    StatePair,
    TokenLit,
    Arith,
    Var,
    compile_expr,
    conj,
    show_value,
)
from .program import Assign, Atomic, If, Redo, compile_program, execute, walk_stmts

PROCESS_STEP = "PROCESS_STEP"
INJECTION = "INJECTION"

TERMINATED = "TERMINATED"
RUNNING = "RUNNING"
STEP_BOUND_HIT = "STEP_BOUND_HIT"
BLOCKED = "BLOCKED"  # reserved: no construct blocks in the shipped semantics

# how a trace ended
END_TERMINATED = "TERMINATED"
END_STEP_BOUND = "STEP_BOUND_HIT"
END_FAULTED = "FAULTED"
END_CYCLE = "CYCLE"


# ---------------------------------------------------------------------------
# Schedulers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoundRobin:
    def __str__(self):
        return "round-robin"


@dataclass(frozen=True)
class RandomScheduler:
    """Uniform choice among enabled processes; an enabled injector is picked
    with probability ``injector_weight`` (the "low frequency" of faults)."""

    seed: int
    injector_weight: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.injector_weight <= 1.0:
            raise ValueError("injector_weight must lie in [0, 1]")

    def __str__(self):
        return f"random(seed={self.seed}, injector_weight={self.injector_weight})"


@dataclass(frozen=True)
class Exhaustive:
    depth: int

    def __str__(self):
        return f"exhaustive(depth={self.depth})"


# ---------------------------------------------------------------------------
# Transitions and traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    actor: str
    before: State
    after: State
    kind: str
    span: SourceSpan | None
    control: tuple  # machine control configuration after the step
    writes: frozenset = frozenset()

    @property
    def pair(self) -> StatePair:
        return StatePair(self.before, self.after)


@dataclass
class Trace:
    initial: State
    initial_control: tuple
    transitions: list[Transition]
    status: dict[str, str]
    end: str
    fault: str | None = None
    fault_span: SourceSpan | None = None
    fault_actor: str | None = None
    lasso: int | None = None  # configuration index the last step returns to
    terminated_at: dict[str, int] = field(default_factory=dict)

    @property
    def final(self) -> State:
        return self.transitions[-1].after if self.transitions else self.initial

    @property
    def choices(self) -> tuple[str, ...]:
        return tuple(t.actor for t in self.transitions)

    def configurations(self) -> list[tuple]:
        """(control, state values) before step 0, after step 0, ..."""
        out = [(self.initial_control, self.initial.values)]
        out.extend((t.control, t.after.values) for t in self.transitions)
        return out

    def injections(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for t in self.transitions:
            if t.kind == INJECTION:
                counts[t.actor] = counts.get(t.actor, 0) + 1
        return counts

    def state_after_termination(self, pid: str) -> State | None:
        idx = self.terminated_at.get(pid)
        if idx is None:
            return None
        return self.initial if idx < 0 else self.transitions[idx].after


# ---------------------------------------------------------------------------
# Machine
# ---------------------------------------------------------------------------


class Machine:
    """Compiled system.  A control configuration is a tuple
    ``(pcs, budgets, last_writes)``; it plus the global state values fully
    determine all future behaviour."""

    def __init__(self, sys: SystemSpec):
        self.sys = sys
        self.decl = sys.decl
        self.pids = tuple(p.id for p in sys.processes)
        self.iids = tuple(i.id for i in sys.injectors)
        self.actors = self.pids + self.iids
        self.codes = [compile_program(p.body, self.decl, sys.atomicity) for p in sys.processes]
        self.inj_codes = [
            compile_program((Atomic(i.body, i.span),), self.decl) for i in sys.injectors
        ]
        self.enabling = [compile_expr(i.enabling, self.decl) for i in sys.injectors]
        self.redo_vars = tuple(
            sorted(
                {s.var for i in sys.injectors for s in walk_stmts(i.body) if isinstance(s, Redo)}
            )
        )
        self.np = len(self.pids)
        self.ends = tuple(c.end for c in self.codes)

    def initial_control(self) -> tuple:
        return (
            tuple(c.entry for c in self.codes),
            tuple(i.budget for i in self.sys.injectors),
            tuple(None for _ in self.redo_vars),
        )

    def terminated(self, control: tuple, k: int) -> bool:
        return control[0][k] >= self.codes[k].end

    def all_terminated(self, control: tuple) -> bool:
        return all(pc >= c.end for pc, c in zip(control[0], self.codes))

    def enabled(self, control: tuple, values: tuple) -> list[int]:
        """Actor indices that may take the next step (processes first)."""
        pcs, budgets, _ = control
        out = [k for k, (pc, end) in enumerate(zip(pcs, self.ends)) if pc < end]
        for j, b in enumerate(budgets):
            if b > 0 and self.enabling[j](values, values, _NO_WRITES):
                out.append(self.np + j)
        return out

    def step(self, control: tuple, values: tuple, actor: int):
        """Execute one atomic unit; returns (control', values', kind, span, writes).

        Raises EvalError when the unit faults.
        """
        pcs, budgets, last = control
        last_map = dict(zip(self.redo_vars, last)) if self.redo_vars else _NO_WRITES
        if actor < self.np:
            code = self.codes[actor]
            pc = pcs[actor]
            instr = code.instrs[pc]
            new_values, new_pc = execute(code, pc, values, last_map)
            pcs = pcs[:actor] + (new_pc,) + pcs[actor + 1 :]
            if self.redo_vars:
                idx = self.decl.index
                last = tuple(
                    (values[idx[v]], new_values[idx[v]])
                    if values[idx[v]] != new_values[idx[v]]
                    else last_map[v]
                    for v in self.redo_vars
                )
            return (pcs, budgets, last), new_values, PROCESS_STEP, instr.span, instr.writes
        j = actor - self.np
        code = self.inj_codes[j]
        instr = code.instrs[code.entry]
        new_values, _ = execute(code, code.entry, values, last_map)
        budgets = budgets[:j] + (budgets[j] - 1,) + budgets[j + 1 :]
        return (pcs, budgets, last), new_values, INJECTION, self.sys.injectors[j].span, instr.writes

    def make_transition(self, actor: int, before: tuple, result) -> Transition:
        control, after, kind, span, writes = result
        return Transition(
            self.actors[actor],
            State(self.decl, before),
            State(self.decl, after),
            kind,
            span,
            control,
            writes,
        )

    def statuses(self, control: tuple, bound_hit: bool) -> dict[str, str]:
        out = {}
        for k, pid in enumerate(self.pids):
            if self.terminated(control, k):
                out[pid] = TERMINATED
            else:
                out[pid] = STEP_BOUND_HIT if bound_hit else RUNNING
        for j, iid in enumerate(self.iids):
            out[iid] = TERMINATED if control[1][j] == 0 else RUNNING
        return out


_NO_WRITES: dict = {}


def step(sys: SystemSpec, control: tuple, state: State, actor: str):
    """Run one atomic unit of ``actor``; returns a Transition or TERMINATED.

    ``control`` is a machine configuration (see ``Machine.initial_control``).
    Evaluation errors propagate as EvalError.
    """
    m = Machine(sys)
    k = m.actors.index(actor)
    if k < m.np and m.terminated(control, k):
        return TERMINATED
    return m.make_transition(k, state.values, m.step(control, state.values, k))


def _new_trace(m: Machine, initial: State) -> Trace:
    ctrl = m.initial_control()
    t = Trace(initial, ctrl, [], {}, END_TERMINATED)
    for k, pid in enumerate(m.pids):
        if m.terminated(ctrl, k):
            t.terminated_at[pid] = -1
    return t


def _record(m: Machine, trace: Trace, tr: Transition, prev_control: tuple) -> None:
    trace.transitions.append(tr)
    k = m.actors.index(tr.actor)
    if k < m.np and not m.terminated(prev_control, k) and m.terminated(tr.control, k):
        trace.terminated_at[tr.actor] = len(trace.transitions) - 1


def run(sys: SystemSpec, sched, initial: State, step_cap: int = 1000) -> Trace:
    """Simulate one schedule until every process terminates or ``step_cap``."""
    if step_cap <= 0:
        raise ValueError("step_cap must be positive")
    if initial.decl != sys.decl:
        raise ValueError("initial state does not match the system declaration")
    if isinstance(sched, Exhaustive):
        raise ValueError("use enumerate_traces for exhaustive exploration")
    m = Machine(sys)
    trace = _new_trace(m, initial)
    control, values = trace.initial_control, initial.values
    rng = random.Random(sched.seed) if isinstance(sched, RandomScheduler) else None
    cursor = 0
    bound_hit = False
    while not m.all_terminated(control):
        if len(trace.transitions) >= step_cap:
            bound_hit = True
            break
        enabled = m.enabled(control, values)
        if rng is None:
            n = len(m.actors)
            actor = next(a for a in ((cursor + i) % n for i in range(n)) if a in enabled)
            cursor = actor + 1
        else:
            procs = [a for a in enabled if a < m.np]
            injs = [a for a in enabled if a >= m.np]
            if injs and rng.random() < sched.injector_weight:
                actor = rng.choice(injs)
            else:
                actor = rng.choice(procs)
        try:
            result = m.step(control, values, actor)
        except EvalError as exc:
            _fault(trace, m.actors[actor], exc)
            break
        tr = m.make_transition(actor, values, result)
        _record(m, trace, tr, control)
        control, values = result[0], result[1]
    trace.status = m.statuses(control, bound_hit)
    if trace.fault is None:
        trace.end = END_STEP_BOUND if bound_hit else END_TERMINATED
    return trace


def _fault(trace: Trace, actor: str, exc: EvalError) -> None:
    trace.end = END_FAULTED
    trace.fault = exc.message
    trace.fault_span = exc.span
    trace.fault_actor = actor


def fair_cycle(m: Machine, cycle_actors, control) -> bool:
    """A cycle is fair when every live process takes a step in it."""
    acted = set(cycle_actors)
    return all(
        m.pids[k] in acted for k in range(m.np) if not m.terminated(control, k)
    )


def enumerate_traces(
    sys: SystemSpec,
    initial: State,
    depth: int,
    cap: int = 100_000,
    reduce: bool = True,
) -> list[Trace]:
    """All interleavings up to ``depth`` atomic units, injector choices included.

    A trace ends when every process has terminated (injections may still
    extend it into further, distinct traces), when ``depth`` is reached, or
    when a unit faults.  With ``reduce`` on, a step that revisits a
    configuration already on the current path is not expanded: if the cycle
    gives every live process a turn it is emitted as a ``CYCLE`` (lasso)
    trace, otherwise it only starves someone and is dropped.
    """
    m = Machine(sys)
    out: list[Trace] = []
    root = _new_trace(m, initial)
    path: list[Transition] = []
    on_path: dict[tuple, int] = {}

    def emit(end: str, control, lasso=None, fault=None, fault_actor=None):
        if len(out) >= cap:
            raise EnumerationCapExceeded(len(out) + 1, cap, "trace enumeration")
        t = Trace(
            initial,
            root.initial_control,
            list(path),
            m.statuses(control, end == END_STEP_BOUND),
            end,
            lasso=lasso,
        )
        t.terminated_at = dict(root.terminated_at)
        prev = root.initial_control
        for i, tr in enumerate(path):
            k = m.actors.index(tr.actor)
            if k < m.np and not m.terminated(prev, k) and m.terminated(tr.control, k):
                t.terminated_at[tr.actor] = i
            prev = tr.control
        if fault is not None:
            _fault(t, fault_actor, fault)
        out.append(t)

    def visit(control, values):
        done = m.all_terminated(control)
        if done:
            emit(END_TERMINATED, control)
        if len(path) >= depth:
            if not done:
                emit(END_STEP_BOUND, control)
            return
        for actor in m.enabled(control, values):
            try:
                result = m.step(control, values, actor)
            except EvalError as exc:
                emit(END_FAULTED, control, fault=exc, fault_actor=m.actors[actor])
                continue
            key = (result[0], result[1])
            path.append(m.make_transition(actor, values, result))
            if reduce and key in on_path:
                start = on_path[key]
                if fair_cycle(m, (t.actor for t in path[start:]), result[0]):
                    emit(END_CYCLE, result[0], lasso=start)
                path.pop()
                continue
            on_path[key] = len(path)
            visit(result[0], result[1])
            del on_path[key]
            path.pop()

    on_path[(root.initial_control, initial.values)] = 0
    visit(root.initial_control, initial.values)
    return out


# ---------------------------------------------------------------------------
# Injector templates
# ---------------------------------------------------------------------------


def _frames(decl: Decl, target: str):
    return [Compare("=", Var(n), Var(n, True)) for n in decl.names if n != target]


def _literal(t, value):
    if isinstance(t, EnumType):
        return TokenLit(value)
    if isinstance(t, BoolType):
        return BoolLit(value)
    if isinstance(t, SetType):
        return SetLit(tuple(IntLit(e) for e in sorted(value)))
    return IntLit(value)


def make_injector(
    kind: FaultKind,
    target: str,
    decl: Decl,
    budget: int,
    *,
    direction: int = -1,
    value=None,
    id: str = "EI",
) -> InjectorSpec:
    """Build an injector for one fault kind acting on ``target``.

    LOST_UPDATE undoes one unit step of a variable the process moves in
    ``direction`` (-1: the process decrements, so a lost update shows up as
    an increment).  DUPLICATED_UPDATE re-applies the last process update of
    ``target``.  FAKE_UPDATE writes ``value`` (default: the last value of the
    carrier).  Every guarantee frames all other variables.
    """
    if target not in decl:
        raise KeyError(f"undeclared variable {target}")
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    t = decl[target]
    x, x_old = Var(target), Var(target, True)
    frames = _frames(decl, target)
    if kind is FaultKind.LOST_UPDATE:
        if not isinstance(t, IntType):
            raise ValueError("lost updates are modelled on integer variables")
        if direction not in (-1, 1):
            raise ValueError("direction is -1 or +1")
        enabling = Compare(">", x, IntLit(t.lo))
        if direction < 0:
            undo = Arith("+", x, IntLit(1))
            moved = Compare(">", x, x_old)
        else:
            undo = Arith("-", x, IntLit(1))
            moved = Compare("<", x, x_old)
        body = (If(enabling, (Assign(target, undo),)),)
        guarantee = conj([moved, *frames])
    elif kind is FaultKind.DUPLICATED_UPDATE:
        enabling = TRUE
        body = (Redo(target),)
        guarantee = conj(frames)
    elif kind is FaultKind.FAKE_UPDATE:
        if value is None:
            value = t.carrier()[-1]
        if not t.contains(value):
            raise ValueError(f"{show_value(value)} is not a value of {target}")
        lit = _literal(t, value)
        enabling = Compare("!=", x, lit)
        body = (Assign(target, lit),)
        guarantee = conj(frames)
    else:
        raise ValueError(f"unknown fault kind {kind}")
    return InjectorSpec(id, frozenset({kind}), enabling, guarantee, budget, body)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _json_value(v):
    if isinstance(v, frozenset):
        return sorted(v)
    return v


def trace_to_lines(trace: Trace) -> list[str]:
    """Line-delimited JSON records; field order is fixed (docs/trace-format.md)."""
    dump = lambda obj: json.dumps(obj, separators=(", ", ": "), ensure_ascii=False)
    lines = [dump({"initial": {n: _json_value(v) for n, v in trace.initial.items()}})]
    for i, t in enumerate(trace.transitions):
        changed = {
            n: [_json_value(t.before[n]), _json_value(t.after[n])] for n in t.before.changed(t.after)
        }
        lines.append(
            dump(
                {
                    "index": i,
                    "actor": t.actor,
                    "kind": t.kind,
                    "changed": changed,
                    "span": str(t.span) if t.span else None,
                }
            )
        )
    tail = {"end": trace.end, "status": trace.status}
    if trace.fault is not None:
        tail["fault"] = trace.fault
        tail["fault_actor"] = trace.fault_actor
        tail["fault_span"] = str(trace.fault_span) if trace.fault_span else None
    if trace.lasso is not None:
        tail["lasso"] = trace.lasso
    lines.append(dump(tail))
    return lines


def serialize_trace(trace: Trace) -> str:
    return "\n".join(trace_to_lines(trace)) + "\n"
