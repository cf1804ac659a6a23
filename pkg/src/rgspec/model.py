"""System data model: layered processes, error injectors, whole-system
validation, and the two semantic consistency checks (rely/guarantee
complementarity and layer monotonicity)."""

from __future__ import annotations

import enum
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Any

from .errors import SourceSpan, SpecTypeError
from .predicates import (
    DEFAULT_CAP,
    TRUE,
    Decl,
    EnumType,
    StatePair,
    _comparable,
    conj,
    implies_on_domain,
    type_check,
)
from .program import Assign, If, Redo, While, walk_stmts

_span = field(default=None, compare=False, repr=False)


class FaultKind(enum.Enum):
    LOST_UPDATE = "lost"
    DUPLICATED_UPDATE = "dup"
    FAKE_UPDATE = "fake"


@dataclass(frozen=True)
class ConditionLayer:
    name: str
    rely: Any
    guarantee: Any
    post: Any = None
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class ProcessSpec:
    id: str
    pre: Any
    layers: tuple[ConditionLayer, ...]
    body: tuple
    span: SourceSpan | None = _span

    def post_of(self, index: int):
        """Postcondition owed in layer ``index``; falls back to the layer-0 post."""
        post = self.layers[index].post
        if post is None:
            post = self.layers[0].post
        return TRUE if post is None else post


@dataclass(frozen=True)
class InjectorSpec:
    id: str
    kinds: frozenset
    enabling: Any
    guarantee: Any
    budget: int
    body: tuple
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class SystemSpec:
    decl: Decl
    init: Any
    processes: tuple[ProcessSpec, ...]
    injectors: tuple[InjectorSpec, ...] = ()
    atomicity: str = "statement"
    name: str = field(default="", compare=False)

    def process(self, pid: str) -> ProcessSpec:
        for p in self.processes:
            if p.id == pid:
                return p
        raise KeyError(f"unknown process {pid}")

    @property
    def actor_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.processes) + tuple(i.id for i in self.injectors)

    def with_budget(self, budget: int) -> SystemSpec:
        return replace(self, injectors=tuple(replace(i, budget=budget) for i in self.injectors))

    def with_atomicity(self, atomicity: str) -> SystemSpec:
        return replace(self, atomicity=atomicity)


@dataclass(frozen=True)
class Diagnostic:
    message: str
    span: SourceSpan | None = None

    def __str__(self):
        return f"{self.span}: {self.message}" if self.span else self.message


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_system(sys: SystemSpec) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    decl = sys.decl

    def check_pred(pred, what: str, two_epoch: bool, owner_span):
        if pred is None:
            return
        try:
            t = type_check(pred, decl, two_epoch=two_epoch)
        except SpecTypeError as exc:
            diags.append(Diagnostic(f"{what}: {exc.message}", exc.span or owner_span))
            return
        if t != "bool":
            diags.append(Diagnostic(f"{what} must be boolean", pred.span or owner_span))

    def check_body(body, owner: str, owner_span):
        for s in walk_stmts(body):
            if isinstance(s, (Assign, Redo)) and s.var not in decl:
                diags.append(Diagnostic(f"{owner}: assignment to undeclared variable {s.var}", s.span or owner_span))
                continue
            if isinstance(s, Assign):
                try:
                    et = type_check(s.expr, decl, two_epoch=False)
                except SpecTypeError as exc:
                    diags.append(Diagnostic(f"{owner}: {exc.message}", exc.span or s.span or owner_span))
                    continue
                vt = decl[s.var]
                ok = _comparable(vt, et) if isinstance(vt, EnumType) else vt.kind == et
                if not ok:
                    diags.append(Diagnostic(f"{owner}: cannot assign to {s.var} ({vt})", s.span or owner_span))
            elif isinstance(s, (While, If)):
                check_pred(s.cond, f"{owner}: guard", False, s.span or owner_span)

    if not sys.processes:
        diags.append(Diagnostic("system declares no process"))
    seen: set[str] = set()
    for actor in (*sys.processes, *sys.injectors):
        if actor.id in seen:
            diags.append(Diagnostic(f"duplicate actor id {actor.id}", actor.span))
        seen.add(actor.id)

    check_pred(sys.init, "init", False, None)
    for p in sys.processes:
        check_pred(p.pre, f"{p.id}: pre", False, p.span)
        if not p.layers:
            diags.append(Diagnostic(f"process {p.id} has no condition layer", p.span))
        names: set[str] = set()
        for layer in p.layers:
            if layer.name in names:
                diags.append(Diagnostic(f"{p.id}: duplicate layer name {layer.name}", layer.span))
            names.add(layer.name)
            where = f"{p.id}.{layer.name}"
            check_pred(layer.rely, f"{where}: rely", True, layer.span)
            check_pred(layer.guarantee, f"{where}: guarantee", True, layer.span)
            check_pred(layer.post, f"{where}: post", False, layer.span)
        check_body(p.body, p.id, p.span)
    for inj in sys.injectors:
        if inj.budget < 0:
            diags.append(Diagnostic(f"injector {inj.id}: negative budget", inj.span))
        if not inj.kinds:
            diags.append(Diagnostic(f"injector {inj.id}: no fault kind declared", inj.span))
        check_pred(inj.enabling, f"{inj.id}: enabling", False, inj.span)
        check_pred(inj.guarantee, f"{inj.id}: guarantee", True, inj.span)
        check_body(inj.body, inj.id, inj.span)
    return diags


# ---------------------------------------------------------------------------
# Environment and complementarity
# ---------------------------------------------------------------------------


def _environment(sys: SystemSpec, pid: str, layers: Mapping[str, int] | None, include_injectors: bool):
    sys.process(pid)
    layers = layers or {}
    actors = []
    for p in sys.processes:
        if p.id != pid:
            actors.append((p.id, p.layers[layers.get(p.id, 0)].guarantee))
    if include_injectors:
        actors.extend((i.id, i.guarantee) for i in sys.injectors)
    return actors


def environment_guarantee(
    sys: SystemSpec, pid: str, layers: Mapping[str, int] | None = None, include_injectors: bool = True
):
    """Conjunction of the guarantees of every actor other than ``pid``.

    ``layers`` picks the layer each other process is assumed to occupy
    (default: layer 0 for everyone).
    """
    return conj(g for _, g in _environment(sys, pid, layers, include_injectors))


@dataclass(frozen=True)
class ComplementVerdict:
    process: str
    layer: int
    layer_name: str
    holds: bool
    actor: str | None = None
    witness: StatePair | None = None
    checked: int = 0

    @property
    def verdict(self) -> str:
        return "HOLDS" if self.holds else "FAILS"


def check_complementarity(
    sys: SystemSpec, cap: int = DEFAULT_CAP, layers: Mapping[str, int] | None = None
) -> list[ComplementVerdict]:
    """Every environment actor's guarantee must imply each layer's rely.

    Layer 0 is the normal mode and faces the other processes only; layers
    from 1 on also face every error injector.  Each actor is checked on its
    own, which is at least as strong as checking the conjunction.
    """
    out = []
    for p in sys.processes:
        for i, layer in enumerate(p.layers):
            result = ComplementVerdict(p.id, i, layer.name, True)
            checked = 0
            for actor, g in _environment(sys, p.id, layers, include_injectors=i > 0):
                imp = implies_on_domain(g, layer.rely, sys.decl, cap)
                checked += imp.checked
                if not imp.holds:
                    result = ComplementVerdict(p.id, i, layer.name, False, actor, imp.witness, checked)
                    break
            else:
                result = ComplementVerdict(p.id, i, layer.name, True, None, None, checked)
            out.append(result)
    return out


@dataclass(frozen=True)
class MonotonicityVerdict:
    process: str
    holds: bool
    stronger: int | None = None
    weaker: int | None = None
    witness: StatePair | None = None

    @property
    def verdict(self) -> str:
        return "HOLDS" if self.holds else "FAILS"


def check_layer_monotonicity(ps: ProcessSpec, decl: Decl, cap: int = DEFAULT_CAP) -> MonotonicityVerdict:
    """Relies must weaken down the layer list; reports the first failure."""
    for i in range(len(ps.layers) - 1):
        imp = implies_on_domain(ps.layers[i].rely, ps.layers[i + 1].rely, decl, cap)
        if not imp.holds:
            return MonotonicityVerdict(ps.id, False, i, i + 1, imp.witness)
    return MonotonicityVerdict(ps.id, True)
