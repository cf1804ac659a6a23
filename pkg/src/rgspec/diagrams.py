"""Context and problem diagrams: a machine, the problem domains it shares
phenomena with, and (in problem diagrams) requirements with dashed
references into the domains.

Source format (``.pf``)::

    context diagram Ward {
      machine Monitor "Monitor machine";
      domain Patients "ICU patients";
      interface Monitor -- Patients : "pulse", "temperature";
    }
    problem diagram WardProblem refines Ward {
      requirement R1 "Monitor patient conditions";
      reference R1 -> Patients : "vital factors";
    }
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace

from .errors import ParseError, SourceSpan


class DiagramKind(enum.Enum):
    CONTEXT = "context"
    PROBLEM = "problem"


class NodeKind(enum.Enum):
    MACHINE = "machine"
    DOMAIN = "domain"
    REQUIREMENT = "requirement"


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    label: str = ""


@dataclass(frozen=True)
class Interface:
    a: str
    b: str
    phenomena: tuple[str, ...] = ()


@dataclass(frozen=True)
class Reference:
    requirement: str
    target: str
    phenomena: tuple[str, ...] = ()


@dataclass(frozen=True)
class Diagram:
    kind: DiagramKind
    name: str
    nodes: tuple[Node, ...] = ()
    interfaces: tuple[Interface, ...] = ()
    references: tuple[Reference, ...] = ()
    frame: str | None = None  # problem-frame pattern tag, informational only
    source: str | None = None  # informal link to a behavioural spec file
    span: SourceSpan | None = field(default=None, compare=False, repr=False)

    def node(self, nid: str) -> Node | None:
        return next((n for n in self.nodes if n.id == nid), None)

    @property
    def machine(self) -> Node | None:
        ms = [n for n in self.nodes if n.kind is NodeKind.MACHINE]
        return ms[0] if len(ms) == 1 else None


@dataclass(frozen=True)
class DiagramDiagnostic:
    subject: str  # node id or edge rendering
    message: str

    def __str__(self):
        return f"{self.subject}: {self.message}"


class DiagramError(ValueError):
    pass


def _edge(i: Interface) -> str:
    return f"{i.a} -- {i.b}"


def _ref(r: Reference) -> str:
    return f"{r.requirement} -> {r.target}"


def validate_diagram(d: Diagram) -> list[DiagramDiagnostic]:
    out: list[DiagramDiagnostic] = []
    kinds: dict[str, NodeKind] = {}
    for n in d.nodes:
        if n.id in kinds:
            out.append(DiagramDiagnostic(n.id, "duplicate node id"))
        kinds.setdefault(n.id, n.kind)

    machines = [n.id for n in d.nodes if n.kind is NodeKind.MACHINE]
    if len(machines) != 1:
        subject = ", ".join(machines) if machines else d.name
        out.append(DiagramDiagnostic(subject, f"{len(machines)} machine nodes, exactly one required"))

    for i in d.interfaces:
        ends = [e for e in (i.a, i.b) if e not in kinds]
        for e in ends:
            out.append(DiagramDiagnostic(_edge(i), f"unknown node {e}"))
        if ends:
            continue
        if i.a == i.b:
            out.append(DiagramDiagnostic(_edge(i), "interface joins a node to itself"))
        for e in dict.fromkeys((i.a, i.b)):
            if kinds[e] is NodeKind.REQUIREMENT:
                out.append(DiagramDiagnostic(_edge(i), f"interface touches requirement {e}"))

    reqs = [n.id for n in d.nodes if n.kind is NodeKind.REQUIREMENT]
    if d.kind is DiagramKind.CONTEXT:
        for r in reqs:
            out.append(DiagramDiagnostic(r, "requirement in a context diagram"))
        for r in d.references:
            out.append(DiagramDiagnostic(_ref(r), "requirement reference in a context diagram"))
        return out

    for r in d.references:
        if kinds.get(r.requirement) is not NodeKind.REQUIREMENT:
            out.append(DiagramDiagnostic(_ref(r), f"{r.requirement} is not a requirement"))
        if r.target not in kinds:
            out.append(DiagramDiagnostic(_ref(r), f"unknown node {r.target}"))
        elif kinds[r.target] is NodeKind.REQUIREMENT:
            out.append(DiagramDiagnostic(_ref(r), "reference targets another requirement"))
    referenced = {r.requirement for r in d.references}
    for r in reqs:
        if r not in referenced:
            out.append(DiagramDiagnostic(r, "requirement has no reference"))
    return out


def refine_to_problem(c: Diagram, reqs=(), refs=(), name: str | None = None) -> Diagram:
    """Add requirements and their references to a context diagram.

    ``reqs`` holds ``(id, label)`` pairs, ``refs`` holds
    ``(requirement, target)`` or ``(requirement, target, phenomena)``.
    """
    if c.kind is not DiagramKind.CONTEXT:
        raise DiagramError(f"{c.name} is not a context diagram")
    problems = validate_diagram(c)
    if problems:
        raise DiagramError(f"{c.name} does not validate: {problems[0]}")
    new_nodes = tuple(Node(rid, NodeKind.REQUIREMENT, label) for rid, label in reqs)
    known = {n.id for n in c.nodes} | {n.id for n in new_nodes}
    new_refs = []
    for ref in refs:
        rid, target, *rest = ref
        for nid in (rid, target):
            if nid not in known:
                raise DiagramError(f"reference {rid} -> {target}: unknown node {nid}")
        new_refs.append(Reference(rid, target, tuple(rest[0]) if rest else ()))
    return replace(
        c,
        kind=DiagramKind.PROBLEM,
        name=name or c.name,
        nodes=c.nodes + new_nodes,
        references=c.references + tuple(new_refs),
    )


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(d: Diagram) -> str:
    problems = validate_diagram(d)
    if problems:
        raise DiagramError(f"{d.name} does not validate: {problems[0]}")
    lines = [f"digraph {_q(d.name)} {{", "  rankdir=LR;", '  node [fontname="Helvetica"];']
    for n in sorted(d.nodes, key=lambda n: n.id):
        label = _q(n.label or n.id)
        if n.kind is NodeKind.MACHINE:
            attrs = f"label={label}, shape=box, peripheries=2"
        elif n.kind is NodeKind.DOMAIN:
            attrs = f"label={label}, shape=box"
        else:
            attrs = f"label={label}, shape=ellipse, style=dashed"
        lines.append(f"  {_q(n.id)} [{attrs}];")
    for i in sorted(d.interfaces, key=lambda i: (i.a, i.b, i.phenomena)):
        lines.append(f"  {_q(i.a)} -> {_q(i.b)} [dir=none, label={_q(', '.join(i.phenomena))}];")
    for r in sorted(d.references, key=lambda r: (r.requirement, r.target, r.phenomena)):
        lines.append(
            f"  {_q(r.requirement)} -> {_q(r.target)} [style=dashed, label={_q(', '.join(r.phenomena))}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# .pf source
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r'(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>//[^\n]*)|(?P<string>"(?:[^"\\\n]|\\.)*")'
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>--|->|[{};:,])"
)


def _tokens(text: str, filename: str):
    line, col, pos = 1, 1, 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", SourceSpan(filename, line, col, line, col + 1))
        kind, s = m.lastgroup, m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind not in ("ws", "comment"):
                value = re.sub(r"\\(.)", r"\1", s[1:-1]) if kind == "string" else s
                out.append((kind, value, SourceSpan(filename, line, col, line, col + len(s))))
            col += len(s)
        pos = m.end()
    out.append(("eof", "", SourceSpan(filename, line, col, line, col)))
    return out


class _PfParser:
    def __init__(self, text: str, filename: str):
        self.toks = _tokens(text, filename)
        self.i = 0
        self.diagrams: dict[str, Diagram] = {}

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg):
        raise ParseError(msg, self.tok[2])

    def take(self, kind=None, value=None):
        k, v, sp = self.tok
        if (kind and k != kind) or (value and v != value):
            self.error(f"expected {value or kind}, found {v or 'end of input'!r}")
        self.i += 1
        return v

    def at(self, value):
        return self.tok[1] == value and self.tok[0] in ("ident", "op")

    def strings(self):
        out = [self.take("string")]
        while self.at(","):
            self.take()
            out.append(self.take("string"))
        return tuple(out)

    def parse(self) -> list[Diagram]:
        out = []
        while self.tok[0] != "eof":
            d = self.diagram()
            if d.name in self.diagrams:
                raise ParseError(f"duplicate diagram {d.name}", d.span)
            self.diagrams[d.name] = d
            out.append(d)
        return out

    def diagram(self) -> Diagram:
        start = self.tok[2]
        word = self.take("ident")
        if word not in ("context", "problem"):
            self.i -= 1
            self.error("expected 'context' or 'problem'")
        self.take("ident", "diagram")
        name = self.take("ident")
        base = None
        if self.at("refines"):
            self.take()
            sp = self.tok[2]
            parent = self.take("ident")
            if parent not in self.diagrams:
                raise ParseError(f"unknown diagram {parent}", sp)
            base = self.diagrams[parent]
        self.take("op", "{")
        nodes, ifaces, refs = [], [], []
        frame = source = None
        while not self.at("}"):
            if self.tok[0] == "eof":
                self.error("unterminated diagram")
            key = self.take("ident")
            if key in ("machine", "domain", "requirement"):
                nid = self.take("ident")
                label = self.take("string") if self.tok[0] == "string" else ""
                nodes.append(Node(nid, NodeKind(key), label))
            elif key == "interface":
                a = self.take("ident")
                self.take("op", "--")
                b = self.take("ident")
                ph = ()
                if self.at(":"):
                    self.take()
                    ph = self.strings()
                ifaces.append(Interface(a, b, ph))
            elif key == "reference":
                r = self.take("ident")
                self.take("op", "->")
                t = self.take("ident")
                ph = ()
                if self.at(":"):
                    self.take()
                    ph = self.strings()
                refs.append(Reference(r, t, ph))
            elif key == "frame":
                frame = self.take("string")
            elif key == "source":
                source = self.take("string")
            else:
                self.i -= 1
                self.error(f"unknown diagram item {key!r}")
            self.take("op", ";")
        end = self.tok[2]
        self.take("op", "}")
        span = SourceSpan(start.file, start.line, start.col, end.end_line, end.end_col)
        kind = DiagramKind(word)
        if base is not None:
            return Diagram(
                kind,
                name,
                base.nodes + tuple(nodes),
                base.interfaces + tuple(ifaces),
                base.references + tuple(refs),
                frame if frame is not None else base.frame,
                source if source is not None else base.source,
                span,
            )
        return Diagram(kind, name, tuple(nodes), tuple(ifaces), tuple(refs), frame, source, span)


def parse_diagrams(text: str, filename: str = "<input>") -> list[Diagram]:
    return _PfParser(text, filename).parse()


def load_diagrams(path) -> list[Diagram]:
    with open(path, encoding="utf-8") as fh:
        return parse_diagrams(fh.read(), str(path))
