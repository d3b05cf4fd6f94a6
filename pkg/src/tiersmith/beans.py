"""Definition-driven bean instances.

A ``BeanValue`` is a tree of field values shaped by a bean or screen
definition (or by the parameter list of a transaction, handler or
procedure).  Scalars are stored as canonical text, nested beans as
``BeanValue`` and vectors as Python lists.

Fields are addressed with dot paths, the same names a web form uses::

    Customer.Person.FirstName
    Result.0.LastName          # element 0 of vector Result
"""
from __future__ import annotations

import copy as _copy
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Union

from . import xmlutil
from .apidef import ApiDefinition, BeanDef, Body, FieldDef, FieldSet, ScreenDef, Shape
from .commontypes import CcValue
from .errors import (
    NotFound,
    PathError,
    RowMappingError,
    RowProblem,
    StructureError,
    Violation,
    ViolationError,
)

# Upper bound on vector growth through path assignment; one query string
# must not be able to allocate unbounded elements.
MAX_VECTOR_LENGTH = 1000

_SEGMENT = re.compile(r"[A-Za-z][A-Za-z0-9]*|0|[1-9][0-9]*")

Segment = Union[str, int]
FieldValue = Union[str, "BeanValue", list]


@dataclass(frozen=True)
class DotPath:
    segments: tuple[Segment, ...]

    @classmethod
    def parse(cls, text: Union[str, DotPath]) -> DotPath:
        if isinstance(text, DotPath):
            return text
        pieces = text.split(".")
        segments: list[Segment] = []
        for piece in pieces:
            if not _SEGMENT.fullmatch(piece):
                raise PathError("unknown-path", text, f"bad segment {piece!r}")
            segments.append(int(piece) if piece[0].isdigit() else piece)
        if not isinstance(segments[0], str):
            raise PathError("unknown-path", text, "must start with a field name")
        return cls(tuple(segments))

    def __str__(self) -> str:
        return ".".join(str(s) for s in self.segments)

    def __truediv__(self, segment: Segment) -> DotPath:
        return DotPath(self.segments + (segment,))


def join(prefix: str, rest: Union[str, Segment]) -> str:
    return f"{prefix}.{rest}" if prefix else str(rest)


@dataclass(frozen=True)
class PathInfo:
    """What a dot path names inside a definition."""

    field: FieldDef
    # "scalar" | "bean" | "vector"; a vector element of a bean vector is
    # "bean", of a scalar vector "scalar".
    terminal: str
    body: Optional[Body] = None  # for terminal == "bean"

    @property
    def type_name(self) -> str:
        return self.field.type.name


def _field_map(api: ApiDefinition, body: Body) -> dict[str, FieldDef]:
    return {f.name: f for f in api.fields_of(body)}


def resolve_path(api: ApiDefinition, body: Body, path: Union[str, DotPath]) -> PathInfo:
    """Resolve ``path`` against a definition (no values involved)."""
    dp = DotPath.parse(path)
    segs = dp.segments
    current = body
    i = 0
    while True:
        seg = segs[i]
        if not isinstance(seg, str):
            raise PathError("unknown-path", str(dp), f"unexpected index {seg}")
        fdef = _field_map(api, current).get(seg)
        if fdef is None:
            raise PathError("unknown-path", str(dp), f"no field {seg} in {current.name}")
        remaining = len(segs) - i - 1
        if fdef.shape is Shape.SCALAR:
            if remaining:
                raise PathError("unknown-path", str(dp), f"{seg} is a scalar")
            return PathInfo(fdef, "scalar")
        if fdef.shape is Shape.BEAN:
            inner = api.bean(fdef.type.name)
            if not remaining:
                return PathInfo(fdef, "bean", inner)
            current = inner
            i += 1
            continue
        # vector
        if not remaining:
            return PathInfo(fdef, "vector")
        if not isinstance(segs[i + 1], int):
            raise PathError("unknown-path", str(dp), f"{seg} is a vector; expected an index")
        if not fdef.type.is_bean:
            if remaining > 1:
                raise PathError("unknown-path", str(dp), f"elements of {seg} are scalars")
            return PathInfo(fdef, "scalar")
        inner = api.bean(fdef.type.name)
        if remaining == 1:
            return PathInfo(fdef, "bean", inner)
        current = inner
        i += 2


class BeanValue:
    """An instance of a bean, screen or parameter-list definition."""

    __slots__ = ("api", "definition", "values")

    def __init__(self, api: ApiDefinition, definition: Body, values: dict):
        self.api = api
        self.definition = definition
        self.values = values

    @property
    def name(self) -> str:
        return self.definition.name

    @property
    def fields(self) -> tuple[FieldDef, ...]:
        return self.api.fields_of(self.definition)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BeanValue):
            return NotImplemented
        return (
            self.definition.name == other.definition.name
            and self.definition.kind == other.definition.kind
            and self.values == other.values
        )

    def __repr__(self) -> str:
        return f"BeanValue({self.definition.name}, {self.values!r})"

    def copy(self) -> BeanValue:
        return BeanValue(self.api, self.definition, _copy.deepcopy(self.values, {id(self.api): self.api}))

    def get(self, path, mode: str = "canonical") -> str:
        return get_path(self, path, mode)

    def set(self, path, raw: str) -> BeanValue:
        return set_path(self, path, raw)

    def value(self, path) -> CcValue:
        info = resolve_path(self.api, self.definition, path)
        return CcValue(info.type_name, get_path(self, path))

    def __getitem__(self, name: str) -> FieldValue:
        return self.values[name]

    def __setitem__(self, name: str, value: FieldValue) -> None:
        if name not in self.values:
            raise KeyError(name)
        self.values[name] = value


def _body_of(api: ApiDefinition, name_or_body: Union[str, Body]) -> Body:
    if isinstance(name_or_body, (BeanDef, ScreenDef, FieldSet)):
        return name_or_body
    try:
        return api.body(name_or_body)
    except NotFound:
        raise NotFound("definition", name_or_body) from None


def _fresh(api: ApiDefinition, fdef: FieldDef) -> FieldValue:
    if fdef.shape is Shape.SCALAR:
        return ""
    if fdef.shape is Shape.BEAN:
        return new_bean(api, api.bean(fdef.type.name))
    return []


def _fresh_element(api: ApiDefinition, fdef: FieldDef) -> FieldValue:
    if fdef.type.is_bean:
        return new_bean(api, api.bean(fdef.type.name))
    return ""


def new_bean(api: ApiDefinition, name: Union[str, Body]) -> BeanValue:
    """A fresh instance: scalars unset, nested beans built, vectors empty."""
    body = _body_of(api, name)
    return BeanValue(api, body, {f.name: _fresh(api, f) for f in api.fields_of(body)})


# ---------------------------------------------------------------------------
# Path access


def _walk(bean: BeanValue, dp: DotPath, grow: bool):
    """Return (container, key) holding the value ``dp`` names, or None if absent."""
    node: FieldValue = bean
    segs = dp.segments
    container, key = None, None
    container_body = bean.definition  # definition owning the most recent named segment
    for i, seg in enumerate(segs):
        if isinstance(seg, int):
            seq = node
            if seg >= len(seq):
                if not grow:
                    return None
                if seg >= MAX_VECTOR_LENGTH:
                    raise PathError("bad-index", str(dp), f"index limit is {MAX_VECTOR_LENGTH - 1}")
                fdef = _field_map(bean.api, container_body)[segs[i - 1]]
                while len(seq) <= seg:
                    seq.append(_fresh_element(bean.api, fdef))
            container, key = seq, seg
        else:
            container_body = node.definition
            container, key = node.values, seg
        node = container[key]
    return container, key


def set_path(bean: BeanValue, path: Union[str, DotPath], raw: str) -> BeanValue:
    """Canonicalize ``raw`` and store it at ``path``.

    Raises ``PathError`` for paths that do not end at a scalar and
    ``ViolationError`` (carrying the path) if ``raw`` breaks the field's
    type rules; in both cases the bean is left untouched.
    """
    dp = DotPath.parse(path)
    info = resolve_path(bean.api, bean.definition, dp)
    if info.terminal != "scalar":
        raise PathError("not-a-scalar", str(dp))
    try:
        canonical = bean.api.types.canonicalize(info.type_name, raw)
    except ViolationError as exc:
        raise ViolationError([v.at(str(dp)) for v in exc.violations]) from None
    container, key = _walk(bean, dp, grow=True)
    container[key] = canonical
    return bean


def get_path(bean: BeanValue, path: Union[str, DotPath], mode: str = "canonical") -> str:
    """Scalar at ``path`` in canonical or display form; unset gives ``""``."""
    if mode not in ("canonical", "display"):
        raise ValueError(f"mode must be 'canonical' or 'display', not {mode!r}")
    dp = DotPath.parse(path)
    info = resolve_path(bean.api, bean.definition, dp)
    if info.terminal != "scalar":
        raise PathError("not-a-scalar", str(dp))
    found = _walk(bean, dp, grow=False)
    value = "" if found is None else found[0][found[1]]
    if mode == "display":
        return bean.api.types.format(info.type_name, value)
    return value


# ---------------------------------------------------------------------------
# Traversal


def _iter_scalars(bean: BeanValue, prefix: str):
    """Yield (path, FieldDef, value) for every scalar slot, base fields first."""
    for fdef in bean.fields:
        value = bean.values.get(fdef.name)
        path = join(prefix, fdef.name)
        if fdef.shape is Shape.SCALAR:
            yield path, fdef, value
        elif fdef.shape is Shape.BEAN:
            if isinstance(value, BeanValue):
                yield from _iter_scalars(value, path)
            else:
                yield path, fdef, value
        else:
            for index, item in enumerate(value or ()):
                item_path = join(path, index)
                if isinstance(item, BeanValue):
                    yield from _iter_scalars(item, item_path)
                else:
                    yield item_path, fdef, item


def validate_bean(bean: BeanValue, prefix: str = "") -> list[Violation]:
    """Every violation in the bean, in effective-field order; [] means valid."""
    problems = []
    types = bean.api.types
    for path, fdef, value in _iter_scalars(bean, prefix):
        if fdef.shape is Shape.BEAN or not isinstance(value, str):
            problems.append(Violation("structure", f"unexpected value {value!r}", path))
            continue
        problem = types.validate(fdef.type.name, value)
        if problem is not None:
            problems.append(problem.at(path))
    return problems


def to_flat(bean: BeanValue, prefix: str = "") -> list[tuple[str, str]]:
    """(dot path, canonical) for every set scalar, in field order."""
    return [
        (path, value)
        for path, fdef, value in _iter_scalars(bean, prefix)
        if isinstance(value, str) and value != ""
    ]


def from_flat(
    api: ApiDefinition,
    name: Union[str, Body],
    prefix: str,
    params: Mapping[str, str],
) -> tuple[BeanValue, list[Violation]]:
    """Build a bean from flat ``path -> raw text`` parameters.

    Keys outside ``prefix`` are ignored.  Unknown keys and type violations
    are collected, never raised.
    """
    bean = new_bean(api, name)
    problems: list[Violation] = []
    lead = prefix + "." if prefix else ""
    for key, raw in params.items():
        if prefix and key == prefix:
            problems.append(Violation("not-a-scalar", f"{key} names a bean, not a field", key))
            continue
        if not key.startswith(lead):
            continue
        try:
            set_path(bean, key[len(lead):], raw)
        except PathError as exc:
            rule = "unknown-key" if exc.reason == "unknown-path" else exc.reason
            problems.append(Violation(rule, f"{exc.reason}: {key}", key))
        except ViolationError as exc:
            problems.extend(v.at(key) for v in exc.violations)
    return bean, problems


# ---------------------------------------------------------------------------
# XML


def _fill_element(bean: BeanValue, elem: ET.Element) -> None:
    for fdef in bean.fields:
        value = bean.values[fdef.name]
        if fdef.shape is Shape.SCALAR:
            ET.SubElement(elem, fdef.name).text = value or None
        elif fdef.shape is Shape.BEAN:
            _fill_element(value, ET.SubElement(elem, fdef.name))
        else:
            for item in value:
                child = ET.SubElement(elem, fdef.name)
                if isinstance(item, BeanValue):
                    _fill_element(item, child)
                else:
                    child.text = item or None


def to_xml(bean: BeanValue, element_name: Optional[str] = None) -> ET.Element:
    """One element per field in effective order; unset scalars are empty elements."""
    elem = ET.Element(element_name or bean.name)
    _fill_element(bean, elem)
    return elem


def read_children(bean: BeanValue, elem: ET.Element, prefix: str) -> BeanValue:
    """Populate ``bean`` from the children of ``elem`` (attributes of ``elem`` are the caller's)."""
    api = bean.api
    fields = _field_map(api, bean.definition)
    if xmlutil.own_text(elem).strip():
        raise StructureError(f"{prefix or elem.tag}: unexpected text")
    seen = set()
    for child in elem:
        fdef = fields.get(child.tag)
        path = join(prefix, child.tag)
        if fdef is None:
            raise StructureError(f"{path}: unknown element <{child.tag}>")
        if child.attrib:
            raise StructureError(f"{path}: unexpected attributes")
        if fdef.shape is Shape.VECTOR:
            seq = bean.values[fdef.name]
            if len(seq) >= MAX_VECTOR_LENGTH:
                raise StructureError(f"{path}: more than {MAX_VECTOR_LENGTH} elements")
            item_path = join(path, len(seq))
            if fdef.type.is_bean:
                seq.append(read_children(new_bean(api, api.bean(fdef.type.name)), child, item_path))
            else:
                seq.append(_read_scalar(api, fdef, child, item_path))
            continue
        if fdef.name in seen:
            raise StructureError(f"{path}: element given twice")
        seen.add(fdef.name)
        if fdef.shape is Shape.SCALAR:
            bean.values[fdef.name] = _read_scalar(api, fdef, child, path)
        else:
            read_children(bean.values[fdef.name], child, path)
    return bean


def _read_scalar(api, fdef, elem, path) -> str:
    if len(elem):
        raise StructureError(f"{path}: scalar field contains elements")
    try:
        return api.types.canonicalize(fdef.type.name, elem.text or "")
    except ViolationError as exc:
        raise ViolationError([v.at(path) for v in exc.violations]) from None


def from_xml(api: ApiDefinition, name: Union[str, Body], elem: ET.Element) -> BeanValue:
    """Inverse of ``to_xml``.  Missing elements leave fields unset."""
    if elem.attrib:
        raise StructureError(f"{elem.tag}: unexpected attributes")
    return read_children(new_bean(api, name), elem, "")


# ---------------------------------------------------------------------------
# Result rows


def from_rows(
    api: ApiDefinition,
    name: str,
    rows: Iterable[Mapping[str, Optional[str]]],
) -> list[BeanValue]:
    """One bean per row; columns must match the bean's fields exactly."""
    body = api.bean(name)
    fields = api.fields_of(body)
    nested = [f.name for f in fields if f.shape is not Shape.SCALAR]
    if nested:
        raise StructureError(f"{name} is not flat: {', '.join(nested)}")
    names = [f.name for f in fields]
    wanted = set(names)
    problems: list[RowProblem] = []
    reported = set()
    beans = []
    for index, row in enumerate(rows):
        columns = set(row)
        for missing in (n for n in names if n not in columns):
            if ("missing", missing) not in reported:
                reported.add(("missing", missing))
                problems.append(RowProblem("missing-column", f"missing column {missing}", index))
        for extra in sorted(columns - wanted, key=str):
            if ("extra", extra) not in reported:
                reported.add(("extra", extra))
                problems.append(RowProblem("unknown-column", f"unknown column {extra}", index))
        bean = new_bean(api, body)
        for fdef in fields:
            if fdef.name not in row:
                continue
            cell = row[fdef.name]
            try:
                bean.values[fdef.name] = api.types.canonicalize(
                    fdef.type.name, "" if cell is None else str(cell)
                )
            except ViolationError as exc:
                problems.append(RowProblem(
                    "violation", f"row {index} column {fdef.name}: {exc.violation.message}", index
                ))
        beans.append(bean)
    if problems:
        raise RowMappingError(problems)
    return beans


def field_paths(api: ApiDefinition, body: Body, prefix: str = "") -> list[str]:
    """Dot paths of every scalar reachable without vector indices."""
    out = []
    for fdef in api.fields_of(body):
        path = join(prefix, fdef.name)
        if fdef.shape is Shape.SCALAR:
            out.append(path)
        elif fdef.shape is Shape.BEAN:
            out.extend(field_paths(api, api.bean(fdef.type.name), path))
    return out


def bean_from_values(api: ApiDefinition, body: Body, values: Mapping[str, FieldValue]) -> BeanValue:
    """Wrap already-built field values (for parameter lists); unknown names raise."""
    bean = new_bean(api, body)
    for key, value in values.items():
        if key not in bean.values:
            raise KeyError(key)
        bean.values[key] = value
    return bean


__all__ = [
    "BeanValue",
    "DotPath",
    "PathInfo",
    "bean_from_values",
    "field_paths",
    "from_flat",
    "from_rows",
    "from_xml",
    "get_path",
    "new_bean",
    "read_children",
    "resolve_path",
    "set_path",
    "to_flat",
    "to_xml",
    "validate_bean",
]
