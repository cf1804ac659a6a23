"""Trace verification against layered rely/guarantee/pre/post conditions.

Semantics, per process p:

* rely is checked pairwise on every transition made by another actor while
  p is live; guarantee on every transition p makes;
* the active layer is the lowest layer whose rely held on every
  environment transition of the whole trace;
* a layer's guarantee failures only count while that layer's rely still
  held; once every layer's rely is broken the remaining verdicts are
  VACUOUS (unless ``strict``);
* post is evaluated in the state right after p terminates, against the
  active layer's post.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import networkx as nx

from .errors import EnumerationCapExceeded, EvalError, SourceSpan
from .model import SystemSpec
from .predicates import Compare, State, Var, compile_expr, conj, conjuncts, referenced, uses_old
from .runtime import (
    END_CYCLE,
    END_STEP_BOUND,
    END_TERMINATED,
    INJECTION,
    Exhaustive,
    Machine,
    RandomScheduler,
    RoundRobin,
    Trace,
    _fault,
    _new_trace,
    _record,
    fair_cycle,
    run,
)

PASS = "PASS"
FAIL = "FAIL"
VACUOUS = "VACUOUS"
NOT_TERMINATED = "NOT_TERMINATED"

RELY_BROKEN = "RELY_BROKEN"
GUARANTEE_BROKEN = "GUARANTEE_BROKEN"
POST_FAILED = "POST_FAILED"
LIVELOCK = "LIVELOCK"
ALL_PASS = "ALL_PASS"
FAULTED = "FAULTED"
PRE_FAILED = "PRE_FAILED"
STEP_BOUND_HIT = "STEP_BOUND_HIT"
NONE = "NONE"

FAILURE_FLAGS = (GUARANTEE_BROKEN, POST_FAILED, LIVELOCK, FAULTED)

END_PREFIX = "PREFIX"

REPORT_SCHEMA = "rgspec-report/1"


@dataclass
class TransitionVerdict:
    index: int
    actor: str
    guarantee: str
    rely: dict[str, str]
    violated: SourceSpan | None = None


@dataclass
class ProcessVerdict:
    pid: str
    pre: str
    active_layer: int | None  # None: every layer's rely was broken
    guarantee: str
    post: str
    rely_broken_at: int | None = None


@dataclass
class Report:
    transitions: list[TransitionVerdict]
    processes: dict[str, ProcessVerdict]
    flags: set[str]
    injector_guarantee: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not (self.flags & set(FAILURE_FLAGS))


class _Compiled:
    """Per-system compiled predicates, shared by the trace checker and explorer."""

    def __init__(self, sys: SystemSpec):
        d = sys.decl
        self.rely = [[compile_expr(l.rely, d) for l in p.layers] for p in sys.processes]
        self.guar = [[compile_expr(l.guarantee, d) for l in p.layers] for p in sys.processes]
        self.post = [[compile_expr(p.post_of(i), d) for i in range(len(p.layers))] for p in sys.processes]
        self.pre = [compile_expr(p.pre, d) for p in sys.processes]
        self.inj_guar = [compile_expr(i.guarantee, d) for i in sys.injectors]


_compiled_cache: dict[int, tuple[SystemSpec, _Compiled]] = {}


def _compiled(sys: SystemSpec) -> _Compiled:
    hit = _compiled_cache.get(id(sys))
    if hit is not None and hit[0] is sys:
        return hit[1]
    c = _Compiled(sys)
    _compiled_cache[id(sys)] = (sys, c)
    return c


def _lowest(mask: int) -> int | None:
    if mask == 0:
        return None
    return (mask & -mask).bit_length() - 1


def check_trace(trace: Trace, sys: SystemSpec, strict: bool = False) -> Report:
    if trace.initial.decl != sys.decl:
        raise ValueError("trace was not produced from this system (declaration mismatch)")
    c = _compiled(sys)
    pids = [p.id for p in sys.processes]
    iids = [i.id for i in sys.injectors]
    trs = trace.transitions
    flags: set[str] = set()
    init = trace.initial.values

    per_process: dict[str, ProcessVerdict] = {}
    tv = [TransitionVerdict(i, t.actor, VACUOUS, {}) for i, t in enumerate(trs)]

    for k, p in enumerate(sys.processes):
        n_layers = len(p.layers)
        pre_ok = bool(c.pre[k](init, init, {}))
        term = trace.terminated_at.get(p.id)
        live_until = len(trs) if term is None else term  # env steps before this index matter
        rely_ok = [True] * n_layers
        broken_at: list[int | None] = [None] * n_layers
        guar_fail: list[int | None] = [None] * n_layers
        for i, t in enumerate(trs):
            b, a = t.before.values, t.after.values
            if t.actor == p.id:
                for l in range(n_layers):
                    if (rely_ok[l] or strict) and guar_fail[l] is None and not c.guar[k][l](b, a, {}):
                        guar_fail[l] = i
            elif i < live_until:
                for l in range(n_layers):
                    if rely_ok[l] and not c.rely[k][l](b, a, {}):
                        rely_ok[l] = False
                        broken_at[l] = i
        active = next((l for l in range(n_layers) if rely_ok[l]), None)
        judged = active if active is not None else n_layers - 1
        cutoff = len(trs) if active is not None or strict else broken_at[judged]

        for i, t in enumerate(trs):
            b, a = t.before.values, t.after.values
            if t.actor == p.id:
                if not pre_ok or i > cutoff:
                    verdict = VACUOUS
                else:
                    verdict = FAIL if not c.guar[k][judged](b, a, {}) else PASS
                tv[i].guarantee = verdict
                if verdict == FAIL:
                    tv[i].violated = p.layers[judged].guarantee.span or p.layers[judged].span
            elif i < live_until:
                if not pre_ok or i > cutoff:
                    tv[i].rely[p.id] = VACUOUS
                else:
                    tv[i].rely[p.id] = PASS if c.rely[k][judged](b, a, {}) else FAIL

        if not pre_ok:
            flags.add(PRE_FAILED)
            guarantee = post = VACUOUS
        else:
            if active is None:
                flags.add(RELY_BROKEN)
            g_fail = guar_fail[judged] is not None and (
                active is not None or strict or guar_fail[judged] <= cutoff
            )
            guarantee = FAIL if g_fail else (PASS if active is not None else VACUOUS)
            if g_fail:
                flags.add(GUARANTEE_BROKEN)
            final = trace.state_after_termination(p.id)
            if final is None:
                post = NOT_TERMINATED
            elif active is None and not strict:
                post = VACUOUS
            else:
                post = PASS if c.post[k][judged](final.values, final.values, {}) else FAIL
                if post == FAIL:
                    flags.add(POST_FAILED)
        per_process[p.id] = ProcessVerdict(
            p.id,
            PASS if pre_ok else FAIL,
            active,
            guarantee,
            post,
            None if active is not None else broken_at[judged],
        )

    inj_verdicts = {}
    for j, iid in enumerate(iids):
        verdict = PASS
        for i, t in enumerate(trs):
            if t.actor != iid:
                continue
            ok = c.inj_guar[j](t.before.values, t.after.values, {})
            tv[i].guarantee = PASS if ok else FAIL
            if not ok:
                tv[i].violated = sys.injectors[j].guarantee.span or sys.injectors[j].span
                verdict = FAIL
                flags.add(GUARANTEE_BROKEN)
        inj_verdicts[iid] = verdict

    if trace.fault is not None:
        owner = per_process.get(trace.fault_actor)
        vacuous = owner is not None and (owner.pre == FAIL or (owner.active_layer is None and not strict))
        if not vacuous:
            flags.add(FAULTED)
    live = detect_livelock(trace, pids)
    if live != NONE:
        flags.add(live)
    if not flags - {STEP_BOUND_HIT}:
        flags.add(ALL_PASS)
    return Report(tv, per_process, flags, inj_verdicts)


def active_layer(trace: Trace, sys: SystemSpec, pid: str):
    """Lowest layer whose rely held on every environment step while ``pid`` was
    live; the string RELY_BROKEN if there is none."""
    k = [p.id for p in sys.processes].index(pid)
    p = sys.processes[k]
    c = _compiled(sys)
    term = trace.terminated_at.get(pid)
    live_until = len(trace.transitions) if term is None else term
    for l in range(len(p.layers)):
        f = c.rely[k][l]
        if all(
            f(t.before.values, t.after.values, {})
            for i, t in enumerate(trace.transitions)
            if t.actor != pid and i < live_until
        ):
            return l
    return RELY_BROKEN


def detect_livelock(trace: Trace, pids=None) -> str:
    """LIVELOCK when a bounded (or cycle-closed) trace repeats a
    (control, state) configuration and every live process stepped in
    between; STEP_BOUND_HIT for a plain cap hit; NONE otherwise."""
    if trace.end not in (END_STEP_BOUND, END_CYCLE):
        return NONE
    if pids is None:
        pids = [p for p in trace.status if any(
            t.actor == p and t.kind != INJECTION for t in trace.transitions
        ) or p in trace.terminated_at]
    configs = trace.configurations()
    seen: dict[tuple, list[int]] = {}
    for k, cfg in enumerate(configs):
        for j in seen.get(cfg, ()):
            actors = {t.actor for t in trace.transitions[j:k]}
            live = [
                p for p in pids
                if trace.terminated_at.get(p) is None or trace.terminated_at[p] + 1 > j
            ]
            if all(p in actors for p in live):
                return LIVELOCK
        seen.setdefault(cfg, []).append(k)
    return STEP_BOUND_HIT if trace.end == END_STEP_BOUND else NONE


# ---------------------------------------------------------------------------
# Whole-system verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomRuns:
    n_runs: int
    seed: int
    injector_weight: float = 0.1
    step_cap: int = 1000

    def __str__(self):
        return f"random(runs={self.n_runs}, seed={self.seed}, injector_weight={self.injector_weight})"


@dataclass(frozen=True)
class RoundRobinRun:
    step_cap: int = 1000

    def __str__(self):
        return "round-robin"


class Outcome(NamedTuple):
    """How a process ended: layer (None = rely broken), post verdict,
    injections so far, and the state right after it terminated."""

    layer: int | None
    post_ok: bool
    injections: int
    final: tuple


@dataclass
class SystemReport:
    status: str  # PASS | FAIL | INCOMPLETE
    strategy: str
    initial_states: int = 0
    rejected: int = 0
    traces: int = 0
    nodes: int = 0
    edges: int = 0
    truncated: int = 0
    counterexample: Trace | None = None
    counterexample_report: Report | None = None
    reason: str | None = None
    outcomes: dict = field(default_factory=dict)  # initial values -> set of outcome tuples
    findings: dict = field(default_factory=dict)  # failure kind -> nodes exhibiting it
    watch_violations: int = 0
    watch_checked: int = 0
    note: str | None = None

    @property
    def passed(self) -> bool:
        return self.status == PASS


def initial_states(sys: SystemSpec, where=None, cap: int = 1_000_000) -> list[State]:
    """States satisfying the init constraint (and ``where``, an expression or
    its source text, if given), in declaration order.

    A top-level conjunct ``x = e`` with ``x`` absent from ``e`` fixes ``x``
    once the variables of ``e`` are known, so only the remaining variables
    are enumerated.  ``cap`` bounds that enumeration.
    """
    decl = sys.decl
    if isinstance(where, str):
        from .dsl import parse_predicate

        where = parse_predicate(where, decl, "<where>")
    pred = sys.init if where is None else conj([sys.init, where])
    defs: dict[str, object] = {}
    for c in conjuncts(pred):
        if not (isinstance(c, Compare) and c.op == "=") or uses_old(c):
            continue
        for lhs, rhs in ((c.left, c.right), (c.right, c.left)):
            if isinstance(lhs, Var) and lhs.name not in defs:
                deps = {n for n, _ in referenced(rhs)}
                if lhs.name not in deps:
                    defs[lhs.name] = (rhs, deps)
                    break
    known = {n for n in decl.names if n not in defs}
    order: list[str] = []
    pending = [n for n in decl.names if n in defs]
    while pending:
        ready = next((n for n in pending if defs[n][1] <= known), None)
        if ready is None:
            ready = pending[0]
            del defs[ready]  # cyclic definition: enumerate it instead
        else:
            order.append(ready)
        known.add(ready)
        pending.remove(ready)
    free = [n for n in decl.names if n not in defs]
    size = math.prod(len(decl[n].carrier()) for n in free)
    if size > cap:
        raise EnumerationCapExceeded(size, cap, "initial-state")
    idx = decl.index
    fns = [(idx[n], decl[n], compile_expr(defs[n][0], decl)) for n in order]
    check = compile_expr(pred, decl)
    placeholder = [t.carrier()[0] for t in decl.types]
    out = []
    for combo in itertools.product(*(decl[n].carrier() for n in free)):
        vals = list(placeholder)
        for n, v in zip(free, combo):
            vals[idx[n]] = v
        ok = True
        for i, t, f in fns:
            cur = tuple(vals)
            try:
                v = f(cur, cur, {})
            except EvalError:
                ok = False
                break
            if not t.contains(v):
                ok = False
                break
            vals[i] = v
        if not ok:
            continue
        v = tuple(vals)
        if check(v, v, {}):
            out.append(State(decl, v))
    rank = [{v: i for i, v in enumerate(t.carrier())} for t in decl.types]
    out.sort(key=lambda s: tuple(r[x] for r, x in zip(rank, s.values)))
    return out


def verify_system(
    sys: SystemSpec,
    strategy,
    initial=None,
    *,
    where=None,
    node_cap: int = 2_000_000,
    watch=(),
    collect_outcomes: bool = False,
) -> SystemReport:
    """Check every trace from every initial state under ``strategy``.

    PASS iff each trace whose preconditions held satisfies every guarantee and
    post it owes, never faults and never livelocks.  All initial states are
    explored; the reported counterexample is the most severe finding
    (livelock first, since non-termination masks whatever else a run would
    have done).  Ties go to the shortest trace when exploring exhaustively
    and to the first failing run otherwise.
    """
    states = list(initial) if initial is not None else initial_states(sys, where)
    c = _compiled(sys)
    report = SystemReport(PASS, str(strategy))
    watch_fns = [compile_expr(w, sys.decl) for w in watch]
    accepted = []
    for s in states:
        v = s.values
        if all(f(v, v, {}) for f in c.pre):
            accepted.append(s)
        else:
            report.rejected += 1
    report.initial_states = len(states)

    candidates = []  # (severity, order, reason, trace)
    if isinstance(strategy, Exhaustive):
        m = Machine(sys)
        try:
            _, found = _explore(m, sys, c, accepted, strategy.depth, node_cap, report, watch_fns, collect_outcomes)
        except EnumerationCapExceeded as exc:
            report.status = "INCOMPLETE"
            report.note = str(exc)
            found = []
        for reason, trace in found:
            candidates.append((SEVERITY.index(reason), len(trace.transitions), reason, trace))
    else:
        if isinstance(strategy, RandomRuns):
            scheds = [
                RandomScheduler(f"{strategy.seed}/{r}", strategy.injector_weight)
                for r in range(strategy.n_runs)
            ]
            cap = strategy.step_cap
        elif isinstance(strategy, (RoundRobinRun, RoundRobin)):
            scheds = [RoundRobin()]
            cap = getattr(strategy, "step_cap", 1000)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        for s in accepted:
            for sched in scheds:
                trace = run(sys, sched, s, cap)
                report.traces += 1
                for t in trace.transitions:
                    for f in watch_fns:
                        report.watch_checked += 1
                        if not f(t.before.values, t.after.values, {}):
                            report.watch_violations += 1
                rep = check_trace(trace, sys)
                if not rep.ok:
                    reason = _reason(rep)
                    report.findings[reason] = report.findings.get(reason, 0) + 1
                    candidates.append((SEVERITY.index(reason), len(candidates), reason, trace))
    if candidates:
        _, _, reason, trace = min(candidates, key=lambda x: x[:2])
        report.status = FAIL
        report.reason = reason
        report.counterexample = trace
        report.counterexample_report = check_trace(trace, sys)
    return report


SEVERITY = (LIVELOCK, FAULTED, GUARANTEE_BROKEN, POST_FAILED)


def _reason(rep: Report) -> str:
    for flag in SEVERITY:
        if flag in rep.flags:
            return flag
    return ALL_PASS


def _explore(m: Machine, sys: SystemSpec, c: _Compiled, initials: list, depth: int,
             node_cap: int, report: SystemReport, watch_fns, collect: bool):
    """Breadth-first search of the configuration graph from all initial states.

    A node is (control, values, aug) where aug records, per process, the
    bitmask of layers whose rely has held so far, the bitmask of layers whose
    guarantee failed while their rely held, and the Outcome once terminated.
    Every path of the graph is a trace, and every verdict of a trace is a
    function of its last node, so judging each node checks every trace (and
    every prefix of one) up to ``depth``.

    The search starts from every initial state at once.  A node's level is
    its distance from the nearest root and nodes at level ``depth`` are not
    expanded, so every trace of at most ``depth`` steps is covered (often
    much longer ones too) and a configuration reachable from several initial
    states is explored only once.  With no node at the bound the explored
    graph is the whole reachable graph and the verdict covers every trace.

    Returns the number of nodes and a list of (reason, trace) candidates.
    """
    np_ = m.np
    n_layers = [len(p.layers) for p in sys.processes]
    full = tuple(((1 << n) - 1, 0, None) for n in n_layers)
    ctrl0 = m.initial_control()
    roots = []
    for initial in initials:
        aug0 = []
        for k in range(np_):
            if m.terminated(ctrl0, k):
                aug0.append(_terminate(c, k, full[k][0], initial.values, 0))
            else:
                aug0.append(full[k])
        roots.append((ctrl0, initial.values, tuple(aug0)))
    # nodes are interned to ints so each edge hashes its (deep) tuple once
    ids: dict = {r: i for i, r in enumerate(roots)}
    nodes = list(roots)
    dist = [0] * len(roots)
    parent: list = [None] * len(roots)
    graph: list = [[] for _ in roots]
    queue = deque(range(len(roots)))
    terminal: dict = {}  # node id -> outcome tuple, for fully terminated nodes
    inj_total = sum(i.budget for i in sys.injectors)
    ends = [code.end for code in m.codes]
    rely_bits = [[(1 << l, f) for l, f in enumerate(fs)] for fs in c.rely]
    guar_bits = [[(1 << l, f) for l, f in enumerate(fs)] for fs in c.guar]
    empty: dict = {}

    found: dict = {}  # reason -> first (node id, extra_step, fault) in BFS order
    # every BFS edge to a fresh node goes one level deeper; only an edge back
    # to a level no deeper than its source can close a cycle
    cyclic = False

    def fail(nid, reason, extra_step=None, fault=None):
        report.findings[reason] = report.findings.get(reason, 0) + 1
        found.setdefault(reason, (nid, extra_step, fault))

    while queue:
        nid = queue.popleft()
        control, values, aug = nodes[nid]
        bad = _judge(aug, n_layers)
        if bad:
            fail(nid, bad)
            continue
        if collect and m.all_terminated(control):
            terminal[nid] = tuple(a[2] for a in aug)
        d = dist[nid]
        if d >= depth:
            report.truncated += 1
            continue
        succs = graph[nid]
        for actor in m.enabled(control, values):
            try:
                result = m.step(control, values, actor)
            except EvalError as exc:
                if actor >= np_ or aug[actor][0] != 0:
                    fail(nid, FAULTED, fault=(actor, exc))
                continue
            ctrl2, vals2 = result[0], result[1]
            report.edges += 1
            for f in watch_fns:
                report.watch_checked += 1
                if not f(values, vals2, {}):
                    report.watch_violations += 1
            if actor >= np_ and not c.inj_guar[actor - np_](values, vals2, {}):
                fail(nid, GUARANTEE_BROKEN, extra_step=actor)
                continue
            new_aug = []
            for k in range(np_):
                entry = aug[k]
                rmask, gmask, done = entry
                if done is not None:
                    new_aug.append(entry)
                    continue
                if actor == k:
                    for bit, g in guar_bits[k]:
                        if rmask & bit and not gmask & bit and not g(values, vals2, empty):
                            gmask |= bit
                    if ctrl2[0][k] >= ends[k]:
                        used = inj_total - sum(ctrl2[1])
                        new_aug.append(_terminate(c, k, rmask, vals2, used, gmask))
                        continue
                    new_aug.append((rmask, gmask, None) if gmask != entry[1] else entry)
                else:
                    for bit, r in rely_bits[k]:
                        if rmask & bit and not r(values, vals2, empty):
                            rmask &= ~bit
                    new_aug.append((rmask, gmask, None) if rmask != entry[0] else entry)
            succ = (ctrl2, vals2, tuple(new_aug))
            sid = ids.get(succ)
            if sid is None:
                if len(nodes) >= node_cap:
                    raise EnumerationCapExceeded(len(nodes) + 1, node_cap, "state graph")
                sid = len(nodes)
                ids[succ] = sid
                nodes.append(succ)
                dist.append(d + 1)
                parent.append((nid, actor))
                graph.append([])
                queue.append(sid)
            elif dist[sid] <= d:
                cyclic = True
            succs.append((sid, actor))

    report.nodes += len(nodes)
    if collect:
        for i, initial in enumerate(initials):
            report.outcomes[initial.values] = _reachable_outcomes(graph, terminal, i)

    def trace_to(nid, steps=(), extra=None, fault=None):
        root, actors = _path(parent, nid)
        return _replay(m, initials[root], actors + list(steps), extra, fault)

    out = []
    lasso = _fair_scc(m, nodes, graph) if cyclic else None
    if lasso is not None:
        entry, cycle = lasso
        trace = trace_to(entry, cycle)
        trace.end = END_CYCLE
        trace.lasso = len(trace.transitions) - len(cycle)
        report.findings[LIVELOCK] = report.findings.get(LIVELOCK, 0) + 1
        out.append((LIVELOCK, trace))
    for reason in SEVERITY:
        if reason in found:
            nid, extra, fault = found[reason]
            out.append((reason, trace_to(nid, extra=extra, fault=fault)))
    return len(nodes), out


def _reachable_outcomes(graph: list, terminal: dict, root: int) -> set:
    """Outcome tuples of terminated nodes reachable from ``root`` in the
    explored graph; complete when no node was cut at the depth bound."""
    seen = {root}
    stack = [root]
    out = set()
    while stack:
        u = stack.pop()
        if u in terminal:
            out.add(terminal[u])
        for v, _ in graph[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return out


def _terminate(c: _Compiled, k: int, rmask: int, values: tuple, used: int, gmask: int = 0):
    layer = _lowest(rmask)
    if layer is None:
        return (rmask, gmask, Outcome(None, True, used, values))
    ok = bool(c.post[k][layer](values, values, {}))
    return (rmask, gmask, Outcome(layer, ok, used, values))


def _judge(aug, n_layers) -> str | None:
    for (rmask, gmask, done), n in zip(aug, n_layers):
        layer = _lowest(rmask)
        judged = layer if layer is not None else n - 1
        if gmask >> judged & 1:
            return GUARANTEE_BROKEN
        if done is not None and not done.post_ok:
            return POST_FAILED
    return None


def _path(parent: list, node: int) -> tuple[int, list[int]]:
    """(root id, actors) of the BFS tree path leading to ``node``."""
    actors = []
    while parent[node] is not None:
        node, actor = parent[node]
        actors.append(actor)
    return node, actors[::-1]


def _replay(m: Machine, initial: State, actors: list[int], extra_step, fault) -> Trace:
    trace = _new_trace(m, initial)
    trace.end = END_PREFIX
    control, values = trace.initial_control, initial.values
    steps = list(actors) + ([extra_step] if extra_step is not None else [])
    for actor in steps:
        result = m.step(control, values, actor)
        _record(m, trace, m.make_transition(actor, values, result), control)
        control, values = result[0], result[1]
    if fault is not None:
        _fault(trace, m.actors[fault[0]], fault[1])
    elif m.all_terminated(control):
        trace.end = END_TERMINATED
    trace.status = m.statuses(control, False)
    return trace


def _fair_scc(m: Machine, nodes: list, graph: list):
    """Find a reachable cycle in which every live process steps.

    Returns (entry node id, actor list of a closed walk from entry back to
    entry) or None.
    """
    g = nx.DiGraph()
    for u, succs in enumerate(graph):
        for v, _ in succs:
            g.add_edge(u, v)
    for comp in sorted(nx.strongly_connected_components(g), key=min):
        if len(comp) == 1:
            (u,) = comp
            if not g.has_edge(u, u):
                continue
        entry = min(comp)
        control = nodes[entry][0]
        need = [k for k in range(m.np) if not m.terminated(control, k)]
        internal = [(u, v, a) for u in sorted(comp) for v, a in graph[u] if v in comp]
        if not fair_cycle(m, (m.actors[a] for _, _, a in internal), control):
            continue
        walk: list[int] = []
        here = entry
        for k in need:
            u, v, a = next(e for e in internal if e[2] == k)
            walk += _bfs(internal, here, u)
            walk.append(a)
            here = v
        walk += _bfs(internal, here, entry)
        if not walk:
            walk = [next(a for u, v, a in internal if u == v == entry)]
        return entry, walk
    return None


def _bfs(edges, src, dst) -> list[int]:
    """Actor labels along a shortest path from src to dst over ``edges``."""
    if src == dst:
        return []
    adj: dict = {}
    for u, v, a in edges:
        adj.setdefault(u, []).append((v, a))
    prev = {src: None}
    q = deque([src])
    while q:
        u = q.popleft()
        if u == dst:
            break
        for v, a in adj.get(u, ()):
            if v not in prev:
                prev[v] = (u, a)
                q.append(v)
    out = []
    node = dst
    while prev[node] is not None:
        node, a = prev[node]
        out.append(a)
    return out[::-1]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def format_trace_report(rep: Report) -> list[str]:
    lines = []
    for pid, pv in rep.processes.items():
        layer = "RELY_BROKEN" if pv.active_layer is None else str(pv.active_layer)
        lines.append(
            f"process {pid}: pre={pv.pre} layer={layer} guarantee={pv.guarantee} post={pv.post}"
        )
    for iid, v in rep.injector_guarantee.items():
        lines.append(f"injector {iid}: guarantee={v}")
    for tvd in rep.transitions:
        if tvd.guarantee == FAIL or FAIL in tvd.rely.values():
            relies = ",".join(f"{k}={v}" for k, v in sorted(tvd.rely.items()))
            lines.append(
                f"  step {tvd.index} {tvd.actor}: guarantee={tvd.guarantee} rely[{relies}]"
                + (f" at {tvd.violated}" if tvd.violated else "")
            )
    lines.append("flags: " + " ".join(sorted(rep.flags)))
    return lines
