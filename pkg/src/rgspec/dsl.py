"""Surface syntax (``.rg`` files): lexer, recursive-descent parser and
pretty-printer.  The grammar is documented in ``docs/dsl.md``."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError, SourceSpan, SpecError
from .model import ConditionLayer, FaultKind, InjectorSpec, ProcessSpec, SystemSpec, validate_system
from .predicates import (
    BUILTINS,
    TRUE,
    Arith,
    BoolLit,
    BoolType,
    Call,
    Compare,
    Decl,
    EnumType,
    IntLit,
    IntType,
    Logic,
    Member,
    Neg,
    Not,
    Quant,
    SetLit,
    SetType,
    TokenLit,
    Var,
)
from .program import Assign, Atomic, If, Redo, Skip, While

KEYWORDS = frozenset(
    """state init process injector layer pre rely guarantee post body kinds enabling
    budget while if then else atomic skip redo and or not forall exists in true false
    old int bool natset enum as atomicity""".split()
)

KIND_NAMES = {"lost": FaultKind.LOST_UPDATE, "dup": FaultKind.DUPLICATED_UPDATE, "fake": FaultKind.FAKE_UPDATE}
KIND_WORDS = {v: k for k, v in KIND_NAMES.items()}

# multi-character ASCII operators first, then single characters
_OPERATORS = [":=", "..", "=>", "!=", "<>", "<=", ">=", "{", "}", "(", ")", "[", "]", ";", ":", ",", ".", "=", "<", ">", "+", "-"]
_UNICODE = {
    "∧": "and",
    "∨": "or",
    "¬": "not",
    "⇒": "=>",
    "≠": "!=",
    "≤": "<=",
    "≥": ">=",
    "∈": "in",
    "∀": "forall",
    "∃": "exists",
    "∅": "EMPTY",
}


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT INT STRING OP KW EOF
    text: str
    span: SourceSpan


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def span(length: int) -> SourceSpan:
        return SourceSpan(filename, line, col, line, col + length)

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isascii() and (c.isalpha() or c == "_"):
            j = i
            while j < n and text[j].isascii() and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            tokens.append(Token("KW" if word in KEYWORDS else "IDENT", word, span(j - i)))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("INT", text[i:j], span(j - i)))
            col += j - i
            i = j
            continue
        if c == '"':
            j = i + 1
            while j < n and text[j] not in '"\n':
                j += 1
            if j >= n or text[j] != '"':
                raise ParseError("unterminated string", span(j - i))
            tokens.append(Token("STRING", text[i + 1 : j], span(j + 1 - i)))
            col += j + 1 - i
            i = j + 1
            continue
        if c in _UNICODE:
            word = _UNICODE[c]
            kind = "KW" if word in KEYWORDS else "OP"
            tokens.append(Token(kind, word, span(1)))
            i += 1
            col += 1
            continue
        for op in _OPERATORS:
            if text.startswith(op, i):
                tokens.append(Token("OP", "!=" if op == "<>" else op, span(len(op))))
                i += len(op)
                col += len(op)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", span(1))
    tokens.append(Token("EOF", "", SourceSpan(filename, line, col, line, col)))
    return tokens


class Parser:
    def __init__(self, text: str, filename: str = "<input>", decl: Decl | None = None):
        self.filename = filename
        self.toks = tokenize(text, filename)
        self.pos = 0
        self.decl = decl
        self.bound: list[str] = []

    # -- token helpers ---------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.toks[min(self.pos + offset, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("OP", "KW") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "EOF":
            self.pos += 1
        return t

    def last_span(self) -> SourceSpan:
        return self.toks[self.pos - 1].span

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        found = "end of input" if tok.kind == "EOF" else repr(tok.text)
        raise ParseError(f"{msg}, found {found}", tok.span)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.advance()

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def ident(self) -> Token:
        if self.tok.kind != "IDENT":
            self.error("expected identifier")
        return self.advance()

    def integer(self) -> int:
        neg = self.accept("-")
        if self.tok.kind != "INT":
            self.error("expected integer")
        v = int(self.advance().text)
        return -v if neg else v

    def span_from(self, start: Token) -> SourceSpan:
        return start.span.merge(self.last_span())

    # -- top level ---------------------------------------------------------

    def parse_spec(self) -> SystemSpec:
        atomicity = "statement"
        init = None
        processes: list[ProcessSpec] = []
        injectors: list[InjectorSpec] = []
        while self.tok.kind != "EOF":
            if self.at("atomicity"):
                self.advance()
                word = self.ident()
                if word.text not in ("statement", "block"):
                    self.error("atomicity is 'statement' or 'block'", word)
                atomicity = word.text
                self.expect(";")
            elif self.at("state"):
                if self.decl is not None:
                    self.error("duplicate state block")
                self.decl = self.parse_state()
            elif self.decl is None:
                self.error("expected the state block before anything else")
            elif self.at("init"):
                start = self.advance()
                if init is not None:
                    self.error("duplicate init", start)
                init = self.expr()
                self.expect(";")
            elif self.at("process"):
                processes.append(self.parse_process())
            elif self.at("injector"):
                injectors.append(self.parse_injector())
            else:
                self.error("expected 'state', 'init', 'process', 'injector' or 'atomicity'")
        if self.decl is None:
            self.error("missing state block")
        return SystemSpec(
            self.decl,
            TRUE if init is None else init,
            tuple(processes),
            tuple(injectors),
            atomicity,
            name=self.filename,
        )

    def parse_state(self) -> Decl:
        self.expect("state")
        self.expect("{")
        items = []
        aliases = {}
        seen = set()
        while not self.at("}"):
            name = self.ident()
            if name.text in seen:
                self.error(f"duplicate variable {name.text}", name)
            seen.add(name.text)
            self.expect(":")
            items.append((name.text, self.parse_type()))
            if self.accept("as"):
                if self.tok.kind != "STRING":
                    self.error("expected display alias string")
                aliases[name.text] = self.advance().text
            self.expect(";")
        end = self.expect("}")
        try:
            return Decl(items, aliases)
        except ValueError as exc:
            raise ParseError(str(exc), end.span) from None

    def parse_type(self):
        start = self.tok
        try:
            if self.accept("int"):
                self.expect("[")
                lo = self.integer()
                self.expect("..")
                hi = self.integer()
                self.expect("]")
                return IntType(lo, hi)
            if self.accept("bool"):
                return BoolType()
            if self.accept("natset"):
                self.expect("(")
                m = self.integer()
                self.expect(")")
                return SetType(m)
            if self.accept("enum"):
                self.expect("{")
                members = [self.ident().text]
                while self.accept(","):
                    members.append(self.ident().text)
                self.expect("}")
                return EnumType(tuple(members))
        except ValueError as exc:
            raise ParseError(str(exc), self.span_from(start)) from None
        self.error("expected a type (int[lo..hi], bool, natset(max), enum{...})")

    def parse_process(self) -> ProcessSpec:
        start = self.expect("process")
        pid = self.ident().text
        self.expect("{")
        pre = TRUE
        if self.accept("pre"):
            pre = self.expr()
            self.expect(";")
        layers = []
        while self.at("layer"):
            layers.append(self.parse_layer())
        if not layers:
            self.error("expected at least one 'layer'")
        body = self.parse_body()
        self.expect("}")
        return ProcessSpec(pid, pre, tuple(layers), body, self.span_from(start))

    def parse_layer(self) -> ConditionLayer:
        start = self.expect("layer")
        name = self.ident().text
        self.expect("{")
        self.expect("rely")
        rely = self.expr()
        self.expect(";")
        self.expect("guarantee")
        guar = self.expr()
        self.expect(";")
        post = None
        if self.accept("post"):
            post = self.expr()
            self.expect(";")
        self.expect("}")
        return ConditionLayer(name, rely, guar, post, self.span_from(start))

    def parse_injector(self) -> InjectorSpec:
        start = self.expect("injector")
        iid = self.ident().text
        self.expect("{")
        self.expect("kinds")
        kinds = set()
        while True:
            word = self.ident()
            if word.text not in KIND_NAMES:
                self.error("fault kind is one of lost, dup, fake", word)
            kinds.add(KIND_NAMES[word.text])
            if not self.accept(","):
                break
        self.expect(";")
        self.expect("enabling")
        enabling = self.expr()
        self.expect(";")
        self.expect("guarantee")
        guar = self.expr()
        self.expect(";")
        self.expect("budget")
        budget = self.integer()
        self.expect(";")
        body = self.parse_body()
        self.expect("}")
        return InjectorSpec(iid, frozenset(kinds), enabling, guar, budget, body, self.span_from(start))

    def parse_body(self) -> tuple:
        self.expect("body")
        return self.block()

    # -- statements --------------------------------------------------------

    def block(self) -> tuple:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.accept(";"):
                continue
            stmts.append(self.stmt())
        self.expect("}")
        return tuple(stmts)

    def stmt(self):
        start = self.tok
        if self.accept("skip"):
            return Skip(start.span)
        if self.accept("redo"):
            var = self.ident().text
            return Redo(var, self.span_from(start))
        if self.accept("while"):
            cond = self.expr()
            body = self.block()
            return While(cond, body, self.span_from(start))
        if self.accept("if"):
            cond = self.expr()
            self.expect("then")
            then = self.block()
            orelse: tuple = ()
            if self.accept("else"):
                orelse = self.block()
            return If(cond, then, orelse, self.span_from(start))
        if self.accept("atomic"):
            body = self.block()
            return Atomic(body, self.span_from(start))
        if self.tok.kind == "IDENT":
            var = self.advance().text
            self.expect(":=")
            e = self.expr()
            return Assign(var, e, self.span_from(start))
        self.error("expected a statement")

    # -- expressions -------------------------------------------------------

    def expr(self):
        if self.at("forall") or self.at("exists"):
            return self.quant()
        return self.implies()

    def quant(self):
        start = self.advance()
        var = self.ident().text
        self.expect("in")
        domain = self.additive()
        self.expect(".")
        self.bound.append(var)
        try:
            body = self.expr()
        finally:
            self.bound.pop()
        return Quant(start.text, var, domain, body, self.span_from(start))

    def implies(self):
        start = self.tok
        left = self.disjunction()
        if self.accept("=>"):
            right = self.expr()
            return Logic("=>", left, right, self.span_from(start))
        return left

    def disjunction(self):
        start = self.tok
        left = self.conjunction()
        while self.accept("or"):
            right = self.conjunction()
            left = Logic("or", left, right, self.span_from(start))
        return left

    def conjunction(self):
        start = self.tok
        left = self.negation()
        while self.accept("and"):
            right = self.negation()
            left = Logic("and", left, right, self.span_from(start))
        return left

    def negation(self):
        start = self.tok
        if self.accept("not"):
            arg = self.negation()
            return Not(arg, self.span_from(start))
        if self.at("forall") or self.at("exists"):
            return self.quant()
        return self.comparison()

    def comparison(self):
        start = self.tok
        left = self.additive()
        t = self.tok
        if t.kind == "OP" and t.text in ("=", "!=", "<", "<=", ">", ">="):
            self.advance()
            right = self.additive()
            return Compare(t.text, left, right, self.span_from(start))
        if self.accept("in"):
            right = self.additive()
            return Member(left, right, self.span_from(start))
        return left

    def additive(self):
        start = self.tok
        left = self.unary()
        while self.tok.kind == "OP" and self.tok.text in ("+", "-"):
            op = self.advance().text
            right = self.unary()
            left = Arith(op, left, right, self.span_from(start))
        return left

    def unary(self):
        start = self.tok
        if self.accept("-"):
            if self.tok.kind == "INT":
                v = int(self.advance().text)
                return IntLit(-v, self.span_from(start))
            arg = self.unary()
            return Neg(arg, self.span_from(start))
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "INT":
            self.advance()
            return IntLit(int(t.text), t.span)
        if self.accept("true"):
            return BoolLit(True, t.span)
        if self.accept("false"):
            return BoolLit(False, t.span)
        if t.kind == "OP" and t.text == "EMPTY":
            self.advance()
            return SetLit((), t.span)
        if self.accept("{"):
            items = []
            if not self.at("}"):
                items.append(self.expr())
                while self.accept(","):
                    items.append(self.expr())
            self.expect("}")
            return SetLit(tuple(items), self.span_from(t))
        if self.accept("old"):
            self.expect("(")
            name = self.ident()
            self.expect(")")
            return Var(name.text, True, self.span_from(t))
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "IDENT":
            self.advance()
            if self.at("(") and t.text in BUILTINS:
                self.advance()
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.accept(","):
                        args.append(self.expr())
                self.expect(")")
                return Call(t.text, tuple(args), self.span_from(t))
            if t.text in self.bound or self.decl is None or t.text in self.decl:
                return Var(t.text, False, t.span)
            if t.text in self.decl.tokens:
                return TokenLit(t.text, t.span)
            return Var(t.text, False, t.span)
        self.error("expected an expression")


def parse(text: str, filename: str = "<input>") -> SystemSpec:
    """Parse a spec; raises ParseError (located) on lexical or syntax errors.

    Type errors are not raised here: run ``validate_system`` on the result,
    or use ``load`` which does both.
    """
    return Parser(text, filename).parse_spec()


def parse_predicate(text: str, decl: Decl, filename: str = "<expr>"):
    p = Parser(text, filename, decl)
    e = p.expr()
    if p.tok.kind != "EOF":
        p.error("unexpected trailing input")
    return e


def load(path, text: str | None = None) -> SystemSpec:
    """Read, parse and validate a spec file; raises ParseError or SpecError."""
    path = Path(path)
    if text is None:
        text = path.read_text(encoding="utf-8")
    spec = parse(text, path.name)
    diags = validate_system(spec)
    if diags:
        raise SpecError(diags)
    return spec


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------

_LEVEL = {"=>": 1, "or": 2, "and": 3}


def _level(e) -> int:
    if isinstance(e, Quant):
        return 0
    if isinstance(e, Logic):
        return _LEVEL[e.op]
    if isinstance(e, Not):
        return 4
    if isinstance(e, (Compare, Member)):
        return 5
    if isinstance(e, Arith):
        return 6
    if isinstance(e, Neg) or (isinstance(e, IntLit) and e.value < 0):
        return 7
    return 8


def format_expr(e, min_level: int = 0) -> str:
    s = _format(e)
    return f"({s})" if _level(e) < min_level else s


def _format(e) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, TokenLit):
        return e.name
    if isinstance(e, Var):
        return f"old({e.name})" if e.old else e.name
    if isinstance(e, SetLit):
        return "{" + ", ".join(format_expr(x) for x in e.items) + "}"
    if isinstance(e, Neg):
        if isinstance(e.arg, IntLit) and e.arg.value >= 0:
            return f"-({e.arg.value})"
        return "-" + format_expr(e.arg, 7)
    if isinstance(e, Arith):
        return f"{format_expr(e.left, 6)} {e.op} {format_expr(e.right, 7)}"
    if isinstance(e, Compare):
        return f"{format_expr(e.left, 6)} {e.op} {format_expr(e.right, 6)}"
    if isinstance(e, Member):
        return f"{format_expr(e.elem, 6)} in {format_expr(e.collection, 6)}"
    if isinstance(e, Not):
        return "not " + format_expr(e.arg, 4)
    if isinstance(e, Logic):
        if e.op == "=>":
            return f"{format_expr(e.left, 2)} => {format_expr(e.right, 1)}"
        lvl = _LEVEL[e.op]
        return f"{format_expr(e.left, lvl)} {e.op} {format_expr(e.right, lvl + 1)}"
    if isinstance(e, Quant):
        return f"{e.kind} {e.var} in {format_expr(e.domain, 6)} . {format_expr(e.body)}"
    if isinstance(e, Call):
        return f"{e.func}(" + ", ".join(format_expr(a) for a in e.args) + ")"
    raise TypeError(f"not an expression: {e!r}")


def _format_stmts(stmts, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    for s in stmts:
        if isinstance(s, Assign):
            out.append(f"{pad}{s.var} := {format_expr(s.expr)};")
        elif isinstance(s, Skip):
            out.append(f"{pad}skip;")
        elif isinstance(s, Redo):
            out.append(f"{pad}redo {s.var};")
        elif isinstance(s, While):
            out.append(f"{pad}while ({format_expr(s.cond)}) {{")
            _format_stmts(s.body, indent + 1, out)
            out.append(f"{pad}}}")
        elif isinstance(s, If):
            out.append(f"{pad}if {format_expr(s.cond)} then {{")
            _format_stmts(s.then, indent + 1, out)
            if s.orelse:
                out.append(f"{pad}}} else {{")
                _format_stmts(s.orelse, indent + 1, out)
            out.append(f"{pad}}}")
        elif isinstance(s, Atomic):
            out.append(f"{pad}atomic {{")
            _format_stmts(s.body, indent + 1, out)
            out.append(f"{pad}}}")
        else:
            raise TypeError(f"not a statement: {s!r}")


def pretty_print(spec: SystemSpec) -> str:
    out: list[str] = []
    if spec.atomicity != "statement":
        out.append(f"atomicity {spec.atomicity};")
    out.append("state {")
    for name, t in zip(spec.decl.names, spec.decl.types):
        alias = spec.decl.aliases.get(name)
        suffix = f' as "{alias}"' if alias is not None else ""
        out.append(f"  {name}: {t}{suffix};")
    out.append("}")
    out.append(f"init {format_expr(spec.init)};")
    for p in spec.processes:
        out.append("")
        out.append(f"process {p.id} {{")
        out.append(f"  pre {format_expr(p.pre)};")
        for layer in p.layers:
            out.append(f"  layer {layer.name} {{")
            out.append(f"    rely {format_expr(layer.rely)};")
            out.append(f"    guarantee {format_expr(layer.guarantee)};")
            if layer.post is not None:
                out.append(f"    post {format_expr(layer.post)};")
            out.append("  }")
        out.append("  body {")
        _format_stmts(p.body, 2, out)
        out.append("  }")
        out.append("}")
    for inj in spec.injectors:
        kinds = ", ".join(KIND_WORDS[k] for k in FaultKind if k in inj.kinds)
        out.append("")
        out.append(f"injector {inj.id} {{")
        out.append(f"  kinds {kinds};")
        out.append(f"  enabling {format_expr(inj.enabling)};")
        out.append(f"  guarantee {format_expr(inj.guarantee)};")
        out.append(f"  budget {inj.budget};")
        out.append("  body {")
        _format_stmts(inj.body, 2, out)
        out.append("  }")
        out.append("}")
    return "\n".join(out) + "\n"
