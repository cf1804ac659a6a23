"""Source locations and the exception hierarchy shared by every module."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class SourceSpan:
    """A region of a source file, 1-based lines and columns, end exclusive."""

    file: str
    line: int
    col: int
    end_line: int
    end_col: int

    def __post_init__(self):
        if (self.end_line, self.end_col) < (self.line, self.col):
            raise ValueError(f"span ends before it starts: {self}")

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}-{self.end_line}:{self.end_col}"

    def contains(self, other: SourceSpan) -> bool:
        return (self.line, self.col) <= (other.line, other.col) and (
            other.end_line,
            other.end_col,
        ) <= (self.end_line, self.end_col)

    def merge(self, other: SourceSpan | None) -> SourceSpan:
        if other is None:
            return self
        start = min((self.line, self.col), (other.line, other.col))
        end = max((self.end_line, self.end_col), (other.end_line, other.end_col))
        return SourceSpan(self.file, start[0], start[1], end[0], end[1])


class RGSpecError(Exception):
    """Base class; carries an optional source span."""

    def __init__(self, message: str, span: SourceSpan | None = None):
        super().__init__(message)
        self.message = message
        self.span = span

    def __str__(self) -> str:
        if self.span is not None:
            return f"{self.span}: {self.message}"
        return self.message


class SpecTypeError(RGSpecError):
    pass


class EvalError(RGSpecError):
    """Raised when evaluation goes wrong: range overflow, min of the empty set."""


class EnumerationCapExceeded(RGSpecError):
    def __init__(self, size: int, cap: int, what: str = "enumeration"):
        super().__init__(f"{what} size {size} exceeds cap {cap}; shrink the domains")
        self.size = size
        self.cap = cap


class ParseError(RGSpecError):
    pass


class SpecError(RGSpecError):
    """A system failed validation; ``diagnostics`` lists every problem."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0] if self.diagnostics else None
        super().__init__(
            "; ".join(d.message for d in self.diagnostics) or "invalid spec",
            first.span if first is not None else None,
        )
