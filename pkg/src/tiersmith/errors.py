"""Exception types shared by every tier.

Two families live here.  Framework errors (``DefinitionError``,
``ViolationError``, ``PathError`` ...) report misuse and bad input to the
caller.  The ``Cc*`` hierarchy is the application exception hierarchy that
crosses the wire: a server binding raises one, the dispatcher marshals the
whole cause chain, and the client proxy raises an equivalent chain.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    """One problem found while loading definitions or page structures."""

    message: str
    source: str = ""
    line: int = 0
    column: int = 0
    definition: str = ""
    field: str = ""

    def __str__(self) -> str:
        where = self.source or "<input>"
        if self.line:
            where += f":{self.line}"
            if self.column:
                where += f":{self.column}"
        subject = ""
        if self.definition:
            subject = f"{self.definition}"
            if self.field:
                subject += f".{self.field}"
            subject += ": "
        return f"{where}: {subject}{self.message}"


class DefinitionError(ValueError):
    """Definitions failed to load; ``diagnostics`` lists every problem."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class XmlSyntaxError(ValueError):
    def __init__(self, message: str, source: str = "", line: int = 0, column: int = 0):
        self.source = source
        self.line = line
        self.column = column
        super().__init__(message)

    def diagnostic(self) -> Diagnostic:
        return Diagnostic(str(self), self.source, self.line, self.column)


class NotFound(LookupError):
    """A named definition, type or page does not exist."""

    def __init__(self, kind: str, name: str):
        self.kind = kind
        self.name = name
        super().__init__(f"unknown {kind} {name!r}")


class UnknownType(NotFound):
    def __init__(self, name: str):
        super().__init__("type", name)


@dataclass(frozen=True)
class Violation:
    """A value broke a rule.  ``path`` is the dot path of the offending field."""

    rule: str
    message: str
    path: str = ""

    def at(self, path: str) -> Violation:
        return Violation(self.rule, self.message, path)

    def __str__(self) -> str:
        if self.path:
            return f"{self.path}: {self.message} [{self.rule}]"
        return f"{self.message} [{self.rule}]"


class ViolationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))

    @property
    def violation(self) -> Violation:
        return self.violations[0]


class PathError(LookupError):
    """A dot path does not name a usable field.

    ``reason`` is one of ``unknown-path``, ``not-a-scalar``, ``bad-index``.
    """

    def __init__(self, reason: str, path: str, detail: str = ""):
        self.reason = reason
        self.path = path
        super().__init__(f"{reason}: {path}" + (f" ({detail})" if detail else ""))


class StructureError(ValueError):
    """A document does not match the definition it is decoded against."""


class WireError(ValueError):
    """A wire document or query string cannot be encoded or decoded.

    ``reason`` names the failure: ``malformed``, ``missing-field``,
    ``unknown-field``, ``type-mismatch``, ``name-mismatch``,
    ``structure-mismatch``, ``malformed-escape``,
    ``malformed-error-document``, ``unknown-transaction``, ...
    """

    def __init__(self, reason: str, message: str):
        self.reason = reason
        super().__init__(f"{reason}: {message}")


@dataclass
class RowProblem:
    rule: str  # missing-column | unknown-column | violation
    message: str
    row: int = -1


class RowMappingError(ValueError):
    def __init__(self, problems):
        self.problems: list[RowProblem] = list(problems)
        super().__init__("; ".join(p.message for p in self.problems))


# ---------------------------------------------------------------------------
# Application exception hierarchy


class CcException(Exception):
    """Root of the exceptions that travel between tiers."""

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message


class CcApplicationError(CcException):
    pass


class CcSystemError(CcException):
    pass


class CcCommunicationError(CcSystemError):
    pass


class CcUnavailable(CcSystemError):
    pass


class CcChainError(CcSystemError):
    """Stands in for an exception class the receiving side does not know."""

    def __init__(self, message: str = "", original_class: str = "", original_message: str = ""):
        super().__init__(message)
        self.original_class = original_class
        self.original_message = original_message


EXCEPTION_CLASSES: dict[str, type[CcException]] = {}


def register_exception(cls: type[CcException]) -> type[CcException]:
    """Make ``cls`` decodable by name.  Usable as a class decorator."""
    if not issubclass(cls, CcException):
        raise TypeError(f"{cls.__name__} does not derive from CcException")
    existing = EXCEPTION_CLASSES.get(cls.__name__)
    if existing is not None and existing is not cls:
        raise ValueError(f"exception class {cls.__name__} already registered")
    EXCEPTION_CLASSES[cls.__name__] = cls
    return cls


for _cls in (
    CcException,
    CcApplicationError,
    CcSystemError,
    CcCommunicationError,
    CcUnavailable,
    CcChainError,
):
    register_exception(_cls)


@register_exception
class PoolExhausted(CcUnavailable):
    """No pooled connection became available within the acquire timeout."""


class PoolError(RuntimeError):
    pass


class DoubleRelease(PoolError):
    pass


class ForeignToken(PoolError):
    pass
