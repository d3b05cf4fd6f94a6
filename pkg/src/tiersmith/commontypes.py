"""Predefined scalar types.

Every scalar field of a bean has one of these types.  A type knows how to
turn user input into its canonical stored text, how to check canonical
text, and how to present it.  Types form a tree rooted at ``CcString``; a
child applies every ancestor's normalisation and rules before its own, so
anything valid for a child is valid for its parent.

The empty string is the "unset" value of every type and always validates:
no field is ever required.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .errors import UnknownType, Violation, ViolationError
from .xmlutil import has_invalid_chars

Check = Callable[[str], Optional[Violation]]

ROOT_TYPE = "CcString"


@dataclass(frozen=True)
class TypeSpec:
    """Behaviour of one common type.

    ``normalize`` and ``check`` are this type's own steps; ancestors'
    steps run first.  ``display`` and ``display_pattern`` are inherited
    from the nearest ancestor that defines them.
    """

    name: str
    parent: Optional[str] = None
    normalize: Optional[Callable[[str], str]] = None
    check: Optional[Check] = None
    display: Optional[Callable[[str], str]] = None
    display_pattern: Optional[str] = None


@dataclass(frozen=True)
class CcValue:
    """A scalar of a common type in canonical form."""

    type: str
    canonical: str = ""

    @property
    def is_set(self) -> bool:
        return self.canonical != ""

    def display(self, registry: TypeRegistry | None = None) -> str:
        return (registry or BUILTINS).format(self.type, self.canonical)


class TypeRegistry:
    def __init__(self, specs: Iterable[TypeSpec] = ()):
        self._specs: dict[str, TypeSpec] = {}
        self._frozen = False
        for spec in specs:
            self.register(spec)

    def register(self, spec: TypeSpec) -> TypeRegistry:
        if self._frozen:
            raise TypeError("type registry is frozen")
        if spec.name in self._specs:
            raise ValueError(f"duplicate-name: type {spec.name} already registered")
        if spec.parent is None:
            if self._specs or spec.name != ROOT_TYPE:
                raise ValueError(f"unknown-parent: type {spec.name} must name a parent")
        elif spec.parent not in self._specs:
            raise ValueError(f"unknown-parent: {spec.parent} (for type {spec.name})")
        self._specs[spec.name] = spec
        return self

    def freeze(self) -> TypeRegistry:
        self._frozen = True
        return self

    def copy(self) -> TypeRegistry:
        return TypeRegistry(self._specs.values())

    def __contains__(self, name: object) -> bool:
        return name in self._specs

    def __iter__(self):
        return iter(self._specs)

    def get(self, name: str) -> TypeSpec:
        try:
            return self._specs[name]
        except KeyError:
            raise UnknownType(name) from None

    def lineage(self, name: str) -> list[TypeSpec]:
        """Specs from the root down to ``name``."""
        chain = []
        spec: Optional[TypeSpec] = self.get(name)
        while spec is not None:
            chain.append(spec)
            spec = self._specs[spec.parent] if spec.parent else None
        chain.reverse()
        return chain

    def is_a(self, name: str, ancestor: str) -> bool:
        return any(s.name == ancestor for s in self.lineage(name))

    def _inherited(self, name: str, attr: str):
        for spec in reversed(self.lineage(name)):
            value = getattr(spec, attr)
            if value is not None:
                return value
        return None

    def validate(self, name: str, canonical: str) -> Optional[Violation]:
        """None when ``canonical`` is acceptable for ``name`` (and all ancestors)."""
        lineage = self.lineage(name)
        if canonical == "":
            return None
        for spec in lineage:
            if spec.check is not None:
                problem = spec.check(canonical)
                if problem is not None:
                    return problem
        return None

    def canonicalize(self, name: str, raw: str) -> str:
        """Normalise user input.  Raises ``ViolationError`` if the result is invalid."""
        text = raw
        for spec in self.lineage(name):
            if spec.normalize is not None:
                text = spec.normalize(text)
        problem = self.validate(name, text)
        if problem is not None:
            raise ViolationError([problem])
        return text

    def format(self, name: str, canonical: str) -> str:
        problem = self.validate(name, canonical)
        if problem is not None:
            raise ViolationError([Violation("invalid-canonical", f"not a canonical {name}: {problem.message}")])
        if canonical == "":
            return ""
        display = self._inherited(name, "display")
        return display(canonical) if display else canonical

    def display_pattern(self, name: str) -> re.Pattern:
        return re.compile(self._inherited(name, "display_pattern") or r"(?s).*")


# ---------------------------------------------------------------------------
# Built-in types

_ASCII_LETTERS = re.compile(r"[A-Za-z]+")
_DIGITS = re.compile(r"[0-9]+")
_EMAIL = re.compile(r"[^@\s]+@(?:[^@\s.]+\.)+[^@\s.]+")


def _strip_chars(chars: str) -> Callable[[str], str]:
    table = str.maketrans("", "", chars)
    return lambda text: text.translate(table)


def _trim(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n").strip()


def _check_string(text: str) -> Optional[Violation]:
    if text != text.strip():
        return Violation("trimmed", "must not start or end with whitespace")
    if "\r" in text or has_invalid_chars(text):
        return Violation("xml-char", "contains a character that cannot be transmitted")
    return None


def _check_name(text: str) -> Optional[Violation]:
    if not _ASCII_LETTERS.fullmatch(text):
        return Violation("letters-only", "must contain only letters")
    if text != text.lower():
        return Violation("lowercase", "must be lower case")
    return None


def _check_number(text: str) -> Optional[Violation]:
    if not _DIGITS.fullmatch(text):
        return Violation("digits-only", "must contain only digits")
    return None


def _check_length(*allowed: int) -> Check:
    words = " or ".join(str(n) for n in allowed)

    def check(text: str) -> Optional[Violation]:
        if len(text) not in allowed:
            return Violation("length", f"must contain {words} digits")
        return None

    return check


def luhn_ok(digits: str) -> bool:
    total = 0
    for i, ch in enumerate(reversed(digits)):
        d = ord(ch) - 48
        if i % 2:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


def _check_card(text: str) -> Optional[Violation]:
    if not 13 <= len(text) <= 19:
        return Violation("length", "must contain 13 to 19 digits")
    if not luhn_ok(text):
        return Violation("luhn", "fails the card number checksum")
    return None


def _check_email(text: str) -> Optional[Violation]:
    if not _EMAIL.fullmatch(text):
        return Violation("email", "must look like name@domain.tld")
    if text != text.lower():
        return Violation("lowercase", "must be lower case")
    return None


def _format_zip(text: str) -> str:
    return text if len(text) == 5 else f"{text[:5]}-{text[5:]}"


def _format_card(text: str) -> str:
    return " ".join(text[i:i + 4] for i in range(0, len(text), 4))


BUILTIN_TYPES = (
    TypeSpec("CcString", None, _trim, _check_string, None, r"(?s)\S(?:.*\S)?"),
    TypeSpec("CcName", "CcString", str.lower, _check_name,
             lambda t: t[0].upper() + t[1:], r"[A-Z][a-z]*"),
    TypeSpec("CcNumber", "CcString", None, _check_number, None, r"[0-9]+"),
    TypeSpec("CcPhone", "CcNumber", _strip_chars("() -"), _check_length(10),
             lambda t: f"({t[:3]}){t[3:6]}-{t[6:]}", r"\([0-9]{3}\)[0-9]{3}-[0-9]{4}"),
    TypeSpec("CcZip", "CcNumber", _strip_chars("-"), _check_length(5, 9),
             _format_zip, r"[0-9]{5}(?:-[0-9]{4})?"),
    TypeSpec("CcSsn", "CcNumber", _strip_chars("-"), _check_length(9),
             lambda t: f"{t[:3]}-{t[3:5]}-{t[5:]}", r"[0-9]{3}-[0-9]{2}-[0-9]{4}"),
    TypeSpec("CcCreditCard", "CcNumber", _strip_chars(" -"), _check_card,
             _format_card, r"[0-9]{4}(?: [0-9]{4})*(?: [0-9]{1,3})?"),
    TypeSpec("CcEmail", "CcString", str.lower, _check_email, None,
             r"[^@\sA-Z]+@(?:[^@\s.A-Z]+\.)+[^@\s.A-Z]+"),
)


def default_registry() -> TypeRegistry:
    """A fresh, extensible registry holding the built-in types."""
    return TypeRegistry(BUILTIN_TYPES)


BUILTINS = default_registry().freeze()
