"""Statement AST for process and injector bodies, and its compilation to
flat control-flow code executed by the runtime.

Granularity: under ``statement`` atomicity every assignment, ``skip`` and
guard evaluation is one atomic unit and ``atomic { }`` groups units.  Under
``block`` atomicity each maximal loop-free run of statements becomes one
unit, and a loop whose body is loop-free runs guard plus body as one unit
per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .errors import EvalError, SourceSpan
from .predicates import Decl, IntType, check_value, compile_expr

ATOMIC_STEP_LIMIT = 100_000

_span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Any
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Skip:
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Redo:
    """Re-apply the most recent process update of ``var`` (duplicated update)."""

    var: str
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class While:
    cond: Any
    body: tuple
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class If:
    cond: Any
    then: tuple
    orelse: tuple = ()
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class Atomic:
    body: tuple
    span: SourceSpan | None = _span


@dataclass(frozen=True)
class _FusedWhile:
    cond: Any
    body: tuple
    span: SourceSpan | None = _span


Stmt = Assign | Skip | Redo | While | If | Atomic


def stmt_children(s) -> tuple:
    if isinstance(s, (While, Atomic, _FusedWhile)):
        return s.body
    if isinstance(s, If):
        return s.then + s.orelse
    return ()


def walk_stmts(stmts):
    for s in stmts:
        yield s
        yield from walk_stmts(stmt_children(s))


def writes(stmts) -> frozenset[str]:
    return frozenset(s.var for s in walk_stmts(stmts) if isinstance(s, (Assign, Redo)))


def loop_free(stmts) -> bool:
    return not any(isinstance(s, (While, _FusedWhile)) for s in walk_stmts(stmts))


def coarsen(stmts: tuple) -> tuple:
    """Rewrite a statement list for block atomicity."""
    out: list = []
    run: list = []

    def flush():
        if run:
            body = tuple(run)
            if len(body) == 1 and isinstance(body[0], Atomic):
                out.append(body[0])
            else:
                out.append(Atomic(body, _merge_spans(body)))
            run.clear()

    for s in stmts:
        if loop_free((s,)):
            run.append(s)
            continue
        flush()
        if isinstance(s, While):
            if loop_free(s.body):
                out.append(_FusedWhile(s.cond, s.body, s.span))
            else:
                out.append(While(s.cond, coarsen(s.body), s.span))
        elif isinstance(s, If):
            out.append(If(s.cond, coarsen(s.then), coarsen(s.orelse), s.span))
        elif isinstance(s, Atomic):
            out.append(s)
        else:
            out.append(s)
    flush()
    return tuple(out)


def _merge_spans(stmts) -> SourceSpan | None:
    spans = [s.span for s in stmts if s.span is not None]
    if not spans:
        return None
    out = spans[0]
    for sp in spans[1:]:
        out = out.merge(sp)
    return out


# ---------------------------------------------------------------------------
# Flat code
# ---------------------------------------------------------------------------


@dataclass
class Instr:
    op: str  # assign | skip | redo | branch | jump | atomic | loop
    span: SourceSpan | None = None
    var: str | None = None
    fn: Any = None
    target: int = -1
    sub: list | None = None
    writes: frozenset = frozenset()


class Code:
    """Compiled program: a list of instructions with jumps pre-resolved."""

    def __init__(self, instrs: list[Instr], decl: Decl):
        self.instrs = instrs
        self.decl = decl
        self.end = len(instrs)

    def resolve(self, pc: int) -> int:
        while pc < self.end and self.instrs[pc].op == "jump":
            pc = self.instrs[pc].target
        return pc

    @property
    def entry(self) -> int:
        return self.resolve(0)

    def __len__(self):
        return self.end


def compile_program(stmts: tuple, decl: Decl, atomicity: str = "statement") -> Code:
    if atomicity not in ("statement", "block"):
        raise ValueError(f"unknown atomicity {atomicity!r}")
    if atomicity == "block":
        stmts = coarsen(tuple(stmts))
    instrs: list[Instr] = []
    _emit(tuple(stmts), decl, instrs)
    return Code(instrs, decl)


def _emit(stmts: tuple, decl: Decl, out: list[Instr]) -> None:
    for s in stmts:
        if isinstance(s, Assign):
            if s.var not in decl:
                raise EvalError(f"assignment to undeclared variable {s.var}", s.span)
            out.append(
                Instr("assign", s.span, s.var, compile_expr(s.expr, decl), writes=frozenset({s.var}))
            )
        elif isinstance(s, Skip):
            out.append(Instr("skip", s.span))
        elif isinstance(s, Redo):
            out.append(Instr("redo", s.span, s.var, writes=frozenset({s.var})))
        elif isinstance(s, While):
            head = len(out)
            branch = Instr("branch", s.cond.span or s.span, fn=compile_expr(s.cond, decl))
            out.append(branch)
            _emit(s.body, decl, out)
            out.append(Instr("jump", target=head))
            branch.target = len(out)
        elif isinstance(s, If):
            branch = Instr("branch", s.cond.span or s.span, fn=compile_expr(s.cond, decl))
            out.append(branch)
            _emit(s.then, decl, out)
            if s.orelse:
                jump = Instr("jump")
                out.append(jump)
                branch.target = len(out)
                _emit(s.orelse, decl, out)
                jump.target = len(out)
            else:
                branch.target = len(out)
        elif isinstance(s, Atomic):
            sub: list[Instr] = []
            _emit(s.body, decl, sub)
            out.append(Instr("atomic", s.span, sub=sub, writes=writes(s.body)))
        elif isinstance(s, _FusedWhile):
            sub = []
            _emit(s.body, decl, sub)
            out.append(
                Instr(
                    "loop",
                    s.span,
                    fn=compile_expr(s.cond, decl),
                    target=-1,
                    sub=sub,
                    writes=writes(s.body),
                )
            )
            out[-1].target = len(out)
        else:
            raise TypeError(f"not a statement: {s!r}")


def execute(code: Code, pc: int, values: tuple, last_writes: dict) -> tuple[tuple, int]:
    """Run the atomic unit at ``pc``; return (new values, next resolved pc)."""
    instr = code.instrs[pc]
    vals = list(values)
    if instr.op == "loop":
        if instr.fn(values, values, {}):
            _run_all(instr.sub, code.decl, vals, last_writes, instr.span)
            return tuple(vals), pc
        return values, code.resolve(instr.target)
    nxt = _exec(instr, code.decl, vals, last_writes)
    return tuple(vals), code.resolve(pc + 1 if nxt is None else nxt)


def _exec(instr: Instr, decl: Decl, vals: list, last_writes: dict) -> int | None:
    """Execute one instruction in place; return a jump target or None."""
    op = instr.op
    if op == "assign":
        cur = tuple(vals)
        v = instr.fn(cur, cur, {})
        check_value(decl, instr.var, v, instr.span)
        vals[decl.index[instr.var]] = v
    elif op == "skip":
        pass
    elif op == "branch":
        cur = tuple(vals)
        if not instr.fn(cur, cur, {}):
            return instr.target
    elif op == "jump":
        return instr.target
    elif op == "redo":
        last = last_writes.get(instr.var)
        if last is not None:
            i = decl.index[instr.var]
            before, after = last
            if isinstance(decl[instr.var], IntType):
                v = vals[i] + (after - before)
            else:
                v = after
            check_value(decl, instr.var, v, instr.span)
            vals[i] = v
    elif op == "atomic":
        _run_all(instr.sub, decl, vals, last_writes, instr.span)
    elif op == "loop":
        while True:
            cur = tuple(vals)
            if not instr.fn(cur, cur, {}):
                break
            _run_all(instr.sub, decl, vals, last_writes, instr.span)
    else:
        raise ValueError(op)
    return None


def _run_all(instrs: list[Instr], decl: Decl, vals: list, last_writes: dict, span) -> None:
    pc = 0
    steps = 0
    while pc < len(instrs):
        steps += 1
        if steps > ATOMIC_STEP_LIMIT:
            raise EvalError("atomic block did not terminate", span)
        nxt = _exec(instrs[pc], decl, vals, last_writes)
        pc = pc + 1 if nxt is None else nxt
