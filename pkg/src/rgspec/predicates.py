"""Two-epoch predicates over finite carriers.

A predicate relates the state *before* a transition to the state *after* it.
``Var("x", old=True)`` reads the before-state (surface syntax ``old(x)``),
``Var("x")`` reads the after-state.  Single-state predicates (pre, post,
init, enabling) are evaluated with before = after.

Expressions are compiled once per (expression, declaration) into nested
closures; evaluation is pure and deterministic.
"""

from __future__ import annotations

import itertools
import math
import operator
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, NamedTuple, Union

from .errors import EnumerationCapExceeded, EvalError, SourceSpan, SpecTypeError

# Intermediate arithmetic results are checked against a machine word; the
# declared range is enforced when a value is stored into a variable.
WORD_MIN = -(2**31)
WORD_MAX = 2**31 - 1

DEFAULT_CAP = 2_000_000


# ---------------------------------------------------------------------------
# Variable types and declarations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntType:
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty integer range [{self.lo}..{self.hi}]")

    @property
    def kind(self) -> str:
        return "int"

    def carrier(self) -> tuple:
        return tuple(range(self.lo, self.hi + 1))

    def contains(self, value) -> bool:
        return type(value) is int and self.lo <= value <= self.hi

    def __str__(self) -> str:
        return f"int[{self.lo}..{self.hi}]"


@dataclass(frozen=True)
class BoolType:
    @property
    def kind(self) -> str:
        return "bool"

    def carrier(self) -> tuple:
        return (False, True)

    def contains(self, value) -> bool:
        return type(value) is bool

    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class SetType:
    """Finite sets of naturals, every element at most ``max``."""

    max: int

    def __post_init__(self):
        if self.max < 0:
            raise ValueError("natset bound must be nonnegative")

    @property
    def kind(self) -> str:
        return "set"

    def carrier(self) -> tuple:
        return _subsets(self.max)

    def contains(self, value) -> bool:
        return isinstance(value, frozenset) and all(
            type(e) is int and 0 <= e <= self.max for e in value
        )

    def __str__(self) -> str:
        return f"natset({self.max})"


@dataclass(frozen=True)
class EnumType:
    members: tuple[str, ...]

    def __post_init__(self):
        if not self.members or len(set(self.members)) != len(self.members):
            raise ValueError("enum members must be nonempty and unique")

    @property
    def kind(self) -> str:
        return "token"

    def carrier(self) -> tuple:
        return self.members

    def contains(self, value) -> bool:
        return isinstance(value, str) and value in self.members

    def __str__(self) -> str:
        return "enum{" + ", ".join(self.members) + "}"


VarType = Union[IntType, BoolType, SetType, EnumType]


@lru_cache(maxsize=32)
def _subsets(max_elem: int) -> tuple:
    elems = range(max_elem + 1)
    return tuple(
        frozenset(e for e in elems if mask >> e & 1) for mask in range(1 << (max_elem + 1))
    )


class Decl:
    """Immutable, ordered variable-domain declaration."""

    __slots__ = ("names", "types", "index", "aliases", "tokens", "_key")

    def __init__(self, variables, aliases: Mapping[str, str] | None = None):
        items = list(variables.items() if isinstance(variables, Mapping) else variables)
        names = tuple(n for n, _ in items)
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable in declaration")
        self.names = names
        self.types = tuple(t for _, t in items)
        self.index = {n: i for i, n in enumerate(names)}
        self.aliases = dict(aliases or {})
        tokens: set[str] = set()
        for t in self.types:
            if isinstance(t, EnumType):
                tokens.update(t.members)
        clash = sorted(tokens & set(names))
        if clash:
            raise ValueError(f"enum member {clash[0]} is also a variable name")
        self.tokens = frozenset(tokens)
        self._key = (tuple(items), tuple(sorted(self.aliases.items())))

    def __eq__(self, other):
        return isinstance(other, Decl) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __contains__(self, name) -> bool:
        return name in self.index

    def __getitem__(self, name: str) -> VarType:
        return self.types[self.index[name]]

    def __iter__(self) -> Iterator[str]:
        return iter(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def __repr__(self) -> str:
        body = ", ".join(f"{n}: {t}" for n, t in zip(self.names, self.types))
        return f"Decl({body})"

    def display(self, name: str) -> str:
        return self.aliases.get(name, name)

    def size(self) -> int:
        return math.prod(len(t.carrier()) for t in self.types)

    def state(self, values: Mapping[str, Any] | None = None, **kw) -> State:
        values = dict(values or {}, **kw)
        missing = [n for n in self.names if n not in values]
        extra = [n for n in values if n not in self.index]
        if missing or extra:
            raise ValueError(f"state mismatch: missing {missing}, undeclared {extra}")
        vals = []
        for n, t in zip(self.names, self.types):
            v = values[n]
            if isinstance(t, SetType) and not isinstance(v, frozenset):
                v = frozenset(v)
            check_value(self, n, v)
            vals.append(v)
        return State(self, tuple(vals))

    def states(self) -> Iterator[State]:
        for vals in itertools.product(*(t.carrier() for t in self.types)):
            yield State(self, vals)


def check_value(decl: Decl, name: str, value, span: SourceSpan | None = None) -> None:
    t = decl[name]
    if not t.contains(value):
        raise EvalError(f"value {show_value(value)} out of range for {name}: {t}", span)


def show_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, frozenset):
        return "{" + ", ".join(str(e) for e in sorted(v)) + "}"
    return str(v)


class State:
    """A total assignment of values to the declared variables."""

    __slots__ = ("decl", "values")

    def __init__(self, decl: Decl, values: tuple):
        self.decl = decl
        self.values = values

    def __getitem__(self, name: str):
        return self.values[self.decl.index[name]]

    def __eq__(self, other):
        return (
            isinstance(other, State) and self.values == other.values and self.decl == other.decl
        )

    def __hash__(self):
        return hash(self.values)

    def __repr__(self):
        return "State(" + ", ".join(f"{n}={show_value(v)}" for n, v in self.items()) + ")"

    def items(self):
        return zip(self.decl.names, self.values)

    def as_dict(self) -> dict:
        return dict(self.items())

    def updated(self, changes: Mapping[str, Any]) -> State:
        vals = list(self.values)
        for name, v in changes.items():
            check_value(self.decl, name, v)
            vals[self.decl.index[name]] = v
        return State(self.decl, tuple(vals))

    def changed(self, other: State) -> list[str]:
        return [n for n, a, b in zip(self.decl.names, self.values, other.values) if a != b]


class StatePair(NamedTuple):
    before: State
    after: State


# ---------------------------------------------------------------------------
# Expression AST
# ---------------------------------------------------------------------------

_span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class IntLit:
    value: int
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class BoolLit:
    value: bool
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class TokenLit:
    name: str
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class SetLit:
    items: tuple
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Var:
    name: str
    old: bool = False
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Neg:
    arg: Any
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Arith:
    op: str  # '+' | '-'
    left: Any
    right: Any
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Compare:
    op: str  # '=' '!=' '<' '<=' '>' '>='
    left: Any
    right: Any
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Member:
    elem: Any
    collection: Any
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Not:
    arg: Any
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Logic:
    op: str  # 'and' | 'or' | '=>'
    left: Any
    right: Any
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Quant:
    kind: str  # 'forall' | 'exists'
    var: str
    domain: Any
    body: Any
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Call:
    func: str  # gcd | min | abs | card
    args: tuple
    span: SourceSpan | None = _span


Expr = Union[IntLit, BoolLit, TokenLit, SetLit, Var, Neg, Arith, Compare, Member, Not, Logic, Quant, Call]

TRUE = BoolLit(True)
FALSE = BoolLit(False)

BUILTINS = {"gcd": 2, "min": 1, "abs": 1, "card": 1}
ORDER_OPS = ("<", "<=", ">", ">=")


def children(e) -> tuple:
    if isinstance(e, SetLit):
        return e.items
    if isinstance(e, (Neg, Not)):
        return (e.arg,)
    if isinstance(e, (Arith, Compare, Logic)):
        return (e.left, e.right)
    if isinstance(e, Member):
        return (e.elem, e.collection)
    if isinstance(e, Quant):
        return (e.domain, e.body)
    if isinstance(e, Call):
        return e.args
    return ()


def walk(e) -> Iterator:
    yield e
    for c in children(e):
        yield from walk(c)


def conj(preds: Iterable) -> Expr:
    preds = list(preds)
    if not preds:
        return TRUE
    out = preds[0]
    for p in preds[1:]:
        out = Logic("and", out, p)
    return out


def conjuncts(e) -> list:
    if isinstance(e, Logic) and e.op == "and":
        return conjuncts(e.left) + conjuncts(e.right)
    return [e]


def referenced(e, bound: frozenset = frozenset()) -> set[tuple[str, bool]]:
    """(name, old) pairs of state variables read by ``e``."""
    if isinstance(e, Var):
        return set() if e.name in bound else {(e.name, e.old)}
    if isinstance(e, Quant):
        return referenced(e.domain, bound) | referenced(e.body, bound | {e.var})
    out: set = set()
    for c in children(e):
        out |= referenced(c, bound)
    return out


def uses_old(e) -> bool:
    return any(isinstance(n, Var) and n.old for n in walk(e))


# ---------------------------------------------------------------------------
# Type checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TokenTy:
    """Type of a bare token literal; compatible with any enum listing it."""

    name: str


def type_name(t) -> str:
    if isinstance(t, EnumType):
        return str(t)
    if isinstance(t, TokenTy):
        return f"token {t.name}"
    return t


def type_check(expr, decl: Decl, two_epoch: bool = True, _bound: dict | None = None):
    """Return the type of ``expr`` ("int", "bool", "set" or an EnumType).

    Raises SpecTypeError located at the offending node.
    """
    bound = _bound or {}
    e = expr

    def err(msg, node=None):
        raise SpecTypeError(msg, (node or e).span)

    if isinstance(e, IntLit):
        return "int"
    if isinstance(e, BoolLit):
        return "bool"
    if isinstance(e, TokenLit):
        if e.name not in decl.tokens:
            err(f"unknown token {e.name}")
        return TokenTy(e.name)
    if isinstance(e, Var):
        if e.name in bound:
            if e.old:
                err(f"old() applied to bound name {e.name}")
            return bound[e.name]
        if e.name not in decl:
            err(f"undeclared variable {e.name}")
        if e.old and not two_epoch:
            err(f"old({e.name}) used in a single-state predicate")
        t = decl[e.name]
        return t if isinstance(t, EnumType) else t.kind
    if isinstance(e, SetLit):
        for item in e.items:
            if type_check(item, decl, two_epoch, bound) != "int":
                err("set literal elements must be integers", item)
        return "set"
    if isinstance(e, Neg):
        if type_check(e.arg, decl, two_epoch, bound) != "int":
            err("unary minus needs an integer")
        return "int"
    if isinstance(e, Arith):
        lt = type_check(e.left, decl, two_epoch, bound)
        rt = type_check(e.right, decl, two_epoch, bound)
        if lt != "int" or rt != "int":
            err(f"'{e.op}' needs integers, got {type_name(lt)} and {type_name(rt)}")
        return "int"
    if isinstance(e, Compare):
        lt = type_check(e.left, decl, two_epoch, bound)
        rt = type_check(e.right, decl, two_epoch, bound)
        if e.op in ORDER_OPS:
            if lt != "int" or rt != "int":
                err(f"'{e.op}' needs integers, got {type_name(lt)} and {type_name(rt)}")
        elif not _comparable(lt, rt):
            err(f"cannot compare {type_name(lt)} with {type_name(rt)}")
        return "bool"
    if isinstance(e, Member):
        if type_check(e.elem, decl, two_epoch, bound) != "int":
            err("membership needs an integer element", e.elem)
        if type_check(e.collection, decl, two_epoch, bound) != "set":
            err("membership needs a set", e.collection)
        return "bool"
    if isinstance(e, Not):
        if type_check(e.arg, decl, two_epoch, bound) != "bool":
            err("'not' needs a boolean")
        return "bool"
    if isinstance(e, Logic):
        for side in (e.left, e.right):
            if type_check(side, decl, two_epoch, bound) != "bool":
                err(f"'{e.op}' needs booleans", side)
        return "bool"
    if isinstance(e, Quant):
        if e.var in decl or e.var in decl.tokens or e.var in bound:
            err(f"quantifier must bind a fresh name, {e.var} is taken")
        if type_check(e.domain, decl, two_epoch, bound) != "set":
            err("quantifier ranges over a set", e.domain)
        inner = dict(bound)
        inner[e.var] = "int"
        if type_check(e.body, decl, two_epoch, inner) != "bool":
            err("quantifier body must be boolean", e.body)
        return "bool"
    if isinstance(e, Call):
        if e.func not in BUILTINS:
            err(f"unknown function {e.func}")
        if len(e.args) != BUILTINS[e.func]:
            err(f"{e.func} takes {BUILTINS[e.func]} argument(s), got {len(e.args)}")
        want = "set" if e.func in ("min", "card") else "int"
        for a in e.args:
            if type_check(a, decl, two_epoch, bound) != want:
                err(f"{e.func} expects {want} arguments", a)
        return "int"
    raise SpecTypeError(f"not an expression: {e!r}")


def _comparable(a, b) -> bool:
    if isinstance(a, TokenTy):
        a, b = b, a
    if isinstance(b, TokenTy):
        if isinstance(a, TokenTy):
            return True
        return isinstance(a, EnumType) and b.name in a.members
    return a == b


# ---------------------------------------------------------------------------
# Compilation and evaluation
# ---------------------------------------------------------------------------

Compiled = Callable[[tuple, tuple, dict], Any]


def _word(v, span):
    if v < WORD_MIN or v > WORD_MAX:
        raise EvalError(f"arithmetic overflow: {v}", span)
    return v


_COMPARE = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def _compare(op):
    return _COMPARE[op]


def _leaf(e, decl: Decl, bound: frozenset):
    """(epoch, index) for a state variable, ("c", value) for a literal, else None."""
    if isinstance(e, Var) and e.name not in bound and e.name in decl:
        return ("b" if e.old else "a", decl.index[e.name])
    if isinstance(e, (IntLit, BoolLit)):
        return ("c", e.value)
    if isinstance(e, TokenLit):
        return ("c", e.name)
    return None


def _compare_leaves(cmp, left, right):
    """Comparison of two leaves without nested closure calls."""
    (lk, li), (rk, ri) = left, right
    if lk == "c" and rk == "c":
        v = cmp(li, ri)
        return lambda b, a, env: v
    if lk == "c":
        if rk == "a":
            return lambda b, a, env: cmp(li, a[ri])
        return lambda b, a, env: cmp(li, b[ri])
    if rk == "c":
        if lk == "a":
            return lambda b, a, env: cmp(a[li], ri)
        return lambda b, a, env: cmp(b[li], ri)
    if lk == "a" and rk == "a":
        return lambda b, a, env: cmp(a[li], a[ri])
    if lk == "a":
        return lambda b, a, env: cmp(a[li], b[ri])
    if rk == "a":
        return lambda b, a, env: cmp(b[li], a[ri])
    return lambda b, a, env: cmp(b[li], b[ri])


@lru_cache(maxsize=4096)
def compile_expr(expr, decl: Decl) -> Compiled:
    """Compile ``expr`` to ``fn(before_values, after_values, env)``."""
    return _compile(expr, decl, frozenset())


def _compile(e, decl: Decl, bound: frozenset) -> Compiled:
    span = e.span
    if isinstance(e, (IntLit, BoolLit)):
        v = e.value
        return lambda b, a, env: v
    if isinstance(e, TokenLit):
        name = e.name
        return lambda b, a, env: name
    if isinstance(e, Var):
        name = e.name
        if name in bound:
            return lambda b, a, env: env[name]
        if name not in decl:
            raise SpecTypeError(f"undeclared variable {name}", span)
        i = decl.index[name]
        if e.old:
            return lambda b, a, env: b[i]
        return lambda b, a, env: a[i]
    if isinstance(e, SetLit):
        items = [_compile(x, decl, bound) for x in e.items]

        def set_lit(b, a, env):
            vals = frozenset(f(b, a, env) for f in items)
            if any(v < 0 for v in vals):
                raise EvalError("set elements must be naturals", span)
            return vals

        return set_lit
    if isinstance(e, Neg):
        f = _compile(e.arg, decl, bound)
        return lambda b, a, env: _word(-f(b, a, env), span)
    if isinstance(e, Arith):
        lf = _compile(e.left, decl, bound)
        rf = _compile(e.right, decl, bound)
        if e.op == "+":
            return lambda b, a, env: _word(lf(b, a, env) + rf(b, a, env), span)
        return lambda b, a, env: _word(lf(b, a, env) - rf(b, a, env), span)
    if isinstance(e, Compare):
        cmp = _compare(e.op)
        left, right = _leaf(e.left, decl, bound), _leaf(e.right, decl, bound)
        if left and right:
            return _compare_leaves(cmp, left, right)
        lf = _compile(e.left, decl, bound)
        rf = _compile(e.right, decl, bound)
        return lambda b, a, env: cmp(lf(b, a, env), rf(b, a, env))
    if isinstance(e, Member):
        ef = _compile(e.elem, decl, bound)
        cf = _compile(e.collection, decl, bound)
        return lambda b, a, env: ef(b, a, env) in cf(b, a, env)
    if isinstance(e, Not):
        f = _compile(e.arg, decl, bound)
        return lambda b, a, env: not f(b, a, env)
    if isinstance(e, Logic) and e.op == "and":
        parts = []
        stack = [e]
        while stack:  # flatten the chain, keeping left-to-right order
            x = stack.pop()
            if isinstance(x, Logic) and x.op == "and":
                stack += [x.right, x.left]
            else:
                parts.append(_compile(x, decl, bound))
        if len(parts) == 2:
            lf, rf = parts
            return lambda b, a, env: lf(b, a, env) and rf(b, a, env)

        def all_of(b, a, env):
            for f in parts:
                v = f(b, a, env)
                if not v:
                    return v
            return v

        return all_of
    if isinstance(e, Logic):
        lf = _compile(e.left, decl, bound)
        rf = _compile(e.right, decl, bound)
        if e.op == "and":
            return lambda b, a, env: lf(b, a, env) and rf(b, a, env)
        if e.op == "or":
            return lambda b, a, env: lf(b, a, env) or rf(b, a, env)
        return lambda b, a, env: (not lf(b, a, env)) or rf(b, a, env)
    if isinstance(e, Quant):
        df = _compile(e.domain, decl, bound)
        bf = _compile(e.body, decl, bound | {e.var})
        var = e.var
        if e.kind == "forall":

            def forall(b, a, env):
                for x in sorted(df(b, a, env)):
                    if not bf(b, a, {**env, var: x}):
                        return False
                return True

            return forall

        def exists(b, a, env):
            for x in sorted(df(b, a, env)):
                if bf(b, a, {**env, var: x}):
                    return True
            return False

        return exists
    if isinstance(e, Call):
        fs = [_compile(x, decl, bound) for x in e.args]
        if e.func == "gcd":
            f0, f1 = fs
            return lambda b, a, env: math.gcd(f0(b, a, env), f1(b, a, env))
        if e.func == "abs":
            (f0,) = fs
            return lambda b, a, env: abs(f0(b, a, env))
        if e.func == "card":
            (f0,) = fs
            return lambda b, a, env: len(f0(b, a, env))
        if e.func == "min":
            (f0,) = fs

            def set_min(b, a, env):
                s = f0(b, a, env)
                if not s:
                    raise EvalError("min is not defined for the empty set", span)
                return min(s)

            return set_min
        raise SpecTypeError(f"unknown function {e.func}", span)
    raise SpecTypeError(f"not an expression: {e!r}")


def evaluate(expr, before: State, after: State | None = None):
    after = before if after is None else after
    return compile_expr(expr, before.decl)(before.values, after.values, {})


def eval_predicate(pred, pair: StatePair) -> bool:
    if pair.before.decl != pair.after.decl:
        raise ValueError("state pair spans two declarations")
    return bool(evaluate(pred, pair.before, pair.after))


def eval_state_predicate(pred, s: State) -> bool:
    """Evaluate with before = after = s; ``old(x)`` reads the same value as ``x``."""
    return bool(evaluate(pred, s, s))


# ---------------------------------------------------------------------------
# Implication by exhaustive enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Implication:
    holds: bool
    witness: StatePair | None = None
    checked: int = 0

    @property
    def verdict(self) -> str:
        return "HOLDS" if self.holds else "FAILS"


def _literal_value(e):
    if isinstance(e, (IntLit, BoolLit)):
        return True, e.value
    if isinstance(e, TokenLit):
        return True, e.name
    if isinstance(e, Neg) and isinstance(e.arg, IntLit):
        return True, -e.arg.value
    return False, None


def _frame_facts(p):
    """Read ties ``x = old(x)`` and fixes ``x = c`` off the top-level conjuncts of p."""
    ties: set[str] = set()
    fixes: dict[tuple[str, bool], set] = {}
    for c in conjuncts(p):
        if not (isinstance(c, Compare) and c.op == "="):
            continue
        lhs, rhs = c.left, c.right
        if isinstance(lhs, Var) and isinstance(rhs, Var) and lhs.name == rhs.name:
            if lhs.old != rhs.old:
                ties.add(lhs.name)
            continue
        for var, other in ((lhs, rhs), (rhs, lhs)):
            ok, value = _literal_value(other)
            if isinstance(var, Var) and ok:
                fixes.setdefault((var.name, var.old), set()).add(value)
    return ties, fixes


def implies_on_domain(p, q, decl: Decl, cap: int = DEFAULT_CAP) -> Implication:
    """Decide ``p => q`` for every (before, after) pair over the declaration.

    Slots no predicate reads are pinned, and top-level conjuncts of p of the
    form ``x = old(x)`` or ``x = <literal>`` restrict the enumeration to pairs
    where p can hold.  Every other pair is visited, so a failure always comes
    with a witness.
    """
    for pred in (p, q):
        if type_check(pred, decl) != "bool":
            raise SpecTypeError("implication operands must be boolean", pred.span)
    if q == TRUE or p == FALSE:
        return Implication(True)

    refs = referenced(p) | referenced(q)
    ties, fixes = _frame_facts(p)
    per_var: list[list[tuple]] = []
    for name, t in zip(decl.names, decl.types):
        carrier = t.carrier()
        after_vals = carrier if (name, False) in refs else None
        before_vals = carrier if (name, True) in refs else None
        for old, vals in ((False, after_vals), (True, before_vals)):
            fixed = fixes.get((name, old))
            if fixed is None:
                continue
            allowed = [v for v in carrier if v in fixed] if len(fixed) == 1 else []
            if old:
                before_vals = allowed
            else:
                after_vals = allowed
        if after_vals is None and before_vals is None:
            pairs = [(carrier[0], carrier[0])]
        elif before_vals is None:
            pairs = [(v, v) for v in after_vals]
        elif after_vals is None:
            pairs = [(v, v) for v in before_vals]
        elif name in ties:
            common = set(before_vals)
            pairs = [(v, v) for v in after_vals if v in common]
        else:
            pairs = [(bv, av) for bv in before_vals for av in after_vals]
        if not pairs:
            return Implication(True)
        per_var.append(pairs)

    size = math.prod(len(x) for x in per_var)
    if size > cap:
        raise EnumerationCapExceeded(size, cap, "implication")
    pf = compile_expr(p, decl)
    qf = compile_expr(q, decl)
    checked = 0
    for combo in itertools.product(*per_var):
        before = tuple(x[0] for x in combo)
        after = tuple(x[1] for x in combo)
        checked += 1
        if pf(before, after, {}) and not qf(before, after, {}):
            return Implication(
                False, StatePair(State(decl, before), State(decl, after)), checked
            )
    return Implication(True, None, checked)
