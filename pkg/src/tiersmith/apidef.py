"""The API definition language.

A project's contract is one or more ``.api.xml`` documents rooted at
``<api>``.  Each holds any number of these definitions::

    <bean name="Person">
      <param name="FirstName" type="CcName"/>
      <param name="LastName" type="CcName"/>
    </bean>
    <bean name="EmailMessage" extends="Message"> ... </bean>
    <transaction name="ServerX"><request>...</request><response>...</response></transaction>
    <request name="HandlerX"> fields </request>
    <screen name="ScreenX"> fields </screen>
    <procedure name="GetPeople"><request>...</request><response>...</response></procedure>

Field elements are ``<param>`` (scalar of a common type), ``<bean>`` (a
nested bean) and ``<vector>`` (a list of beans or of scalars).

``parse_definitions`` validates everything up front; a loaded
``ApiDefinition`` is immutable and fully cross-referenced.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence, Union

from . import xmlutil
from .commontypes import BUILTINS, TypeRegistry
from .errors import DefinitionError, Diagnostic, NotFound, XmlSyntaxError

IDENTIFIER = re.compile(r"[A-Za-z][A-Za-z0-9]*")

KINDS = ("bean", "screen", "transaction", "request", "procedure")


class Shape(enum.Enum):
    SCALAR = "scalar"
    BEAN = "nested-bean"
    VECTOR = "vector"


@dataclass(frozen=True)
class TypeRef:
    kind: str  # "predefined" | "bean"
    name: str

    @property
    def is_bean(self) -> bool:
        return self.kind == "bean"


@dataclass(frozen=True)
class FieldDef:
    name: str
    shape: Shape
    type: TypeRef
    position: int
    line: int = field(default=0, compare=False)

    @property
    def is_scalar(self) -> bool:
        return self.shape is Shape.SCALAR

    @property
    def is_vector(self) -> bool:
        return self.shape is Shape.VECTOR


@dataclass(frozen=True)
class BeanDef:
    name: str
    fields: tuple[FieldDef, ...] = ()
    extends: Optional[str] = None
    source: str = field(default="", compare=False)
    line: int = field(default=0, compare=False)
    kind = "bean"


@dataclass(frozen=True)
class ScreenDef:
    name: str
    fields: tuple[FieldDef, ...] = ()
    source: str = field(default="", compare=False)
    line: int = field(default=0, compare=False)
    extends = None
    kind = "screen"


@dataclass(frozen=True)
class FieldSet:
    """The parameter list of a transaction, handler or procedure, viewed as a body."""

    name: str
    fields: tuple[FieldDef, ...] = ()
    extends = None
    kind = "fields"


@dataclass(frozen=True)
class TransactionDef:
    name: str
    request: tuple[FieldDef, ...] = ()
    response: tuple[FieldDef, ...] = ()
    source: str = field(default="", compare=False)
    line: int = field(default=0, compare=False)
    kind = "transaction"

    @property
    def request_body(self) -> FieldSet:
        return FieldSet(self.name, self.request)

    @property
    def response_body(self) -> FieldSet:
        return FieldSet(self.name, self.response)


@dataclass(frozen=True)
class RequestHandlerDef:
    name: str
    request: tuple[FieldDef, ...] = ()
    source: str = field(default="", compare=False)
    line: int = field(default=0, compare=False)
    kind = "request"

    @property
    def request_body(self) -> FieldSet:
        return FieldSet(self.name, self.request)


@dataclass(frozen=True)
class ProcedureDef:
    name: str
    request: tuple[FieldDef, ...] = ()
    response: tuple[FieldDef, ...] = ()
    source: str = field(default="", compare=False)
    line: int = field(default=0, compare=False)
    kind = "procedure"

    @property
    def request_body(self) -> FieldSet:
        return FieldSet(self.name, self.request)

    @property
    def response_body(self) -> FieldSet:
        return FieldSet(self.name, self.response)


Body = Union[BeanDef, ScreenDef, FieldSet]
Definition = Union[BeanDef, ScreenDef, TransactionDef, RequestHandlerDef, ProcedureDef]


def _ref(kind, name):
    return TypeRef(kind, name)


# Screens every application gets without declaring them.  They are not part
# of ``ApiDefinition.screens`` but are found by ``screen()``/``lookup``.
BUILTIN_SCREENS: Mapping[str, ScreenDef] = MappingProxyType({
    "CcErrorScreen": ScreenDef(
        "CcErrorScreen",
        (
            FieldDef("Message", Shape.SCALAR, _ref("predefined", "CcString"), 0),
            FieldDef("Exception", Shape.SCALAR, _ref("predefined", "CcString"), 1),
        ),
        source="<builtin>",
    ),
})


@dataclass(frozen=True)
class ApiDefinition:
    beans: Mapping[str, BeanDef]
    transactions: Mapping[str, TransactionDef]
    handlers: Mapping[str, RequestHandlerDef]
    screens: Mapping[str, ScreenDef]
    procedures: Mapping[str, ProcedureDef]
    sources: tuple[str, ...] = ()
    types: TypeRegistry = field(default=BUILTINS, compare=False, repr=False)
    _effective: Mapping[str, tuple[FieldDef, ...]] = field(
        default=MappingProxyType({}), compare=False, repr=False
    )

    def collection(self, kind: str) -> Mapping[str, Definition]:
        try:
            return {
                "bean": self.beans,
                "screen": self.screens,
                "transaction": self.transactions,
                "request": self.handlers,
                "procedure": self.procedures,
            }[kind]
        except KeyError:
            raise ValueError(f"unknown definition kind {kind!r}") from None

    def lookup(self, kind: str, name: str) -> Definition:
        found = self.collection(kind).get(name)
        if found is None and kind == "screen":
            found = BUILTIN_SCREENS.get(name)
        if found is None:
            raise NotFound(kind, name)
        return found

    def bean(self, name: str) -> BeanDef:
        return self.lookup("bean", name)

    def screen(self, name: str) -> ScreenDef:
        return self.lookup("screen", name)

    def body(self, name: str) -> Body:
        """A bean or screen definition by name (they share one namespace)."""
        if name in self.beans:
            return self.beans[name]
        return self.lookup("screen", name)

    def fields_of(self, body: Body) -> tuple[FieldDef, ...]:
        """``effective_fields`` for any body, using the cache built at load."""
        if isinstance(body, BeanDef):
            cached = self._effective.get(body.name)
            if cached is not None:
                return cached
            return _linearize(body, self.beans)
        return body.fields

    def definitions(self) -> Iterable[Definition]:
        for kind in KINDS:
            yield from self.collection(kind).values()


def lookup(api: ApiDefinition, kind: str, name: str) -> Definition:
    return api.lookup(kind, name)


def effective_fields(defn: Body, api: ApiDefinition) -> tuple[FieldDef, ...]:
    """Inherited fields first, root ancestor first, then the definition's own."""
    return api.fields_of(defn)


def _linearize(defn: Body, beans: Mapping[str, BeanDef]) -> tuple[FieldDef, ...]:
    chain = []
    current: Optional[Body] = defn
    while current is not None:
        chain.append(current)
        current = beans[current.extends] if current.extends else None
    fields: list[FieldDef] = []
    for level in reversed(chain):
        fields.extend(level.fields)
    return tuple(fields)


# ---------------------------------------------------------------------------
# Loading


_FIELD_TAGS = {"param": Shape.SCALAR, "bean": Shape.BEAN, "vector": Shape.VECTOR}


@dataclass
class _Raw:
    """A parsed definition before cross-referencing."""

    kind: str
    name: str
    source: str
    line: int
    extends: Optional[str] = None
    extends_line: int = 0
    fields: list = field(default_factory=list)  # [(FieldDef, type name)]
    request: list = field(default_factory=list)
    response: list = field(default_factory=list)


class _Loader:
    def __init__(self, types: TypeRegistry):
        self.types = types
        self.diagnostics: list[Diagnostic] = []
        self.raw: dict[str, dict[str, _Raw]] = {k: {} for k in KINDS}

    def error(self, message, source="", line=0, definition="", field_name="", column=0):
        self.diagnostics.append(Diagnostic(message, source, line, column, definition, field_name))

    # -- syntax ------------------------------------------------------------

    def read(self, text, source):
        try:
            root, positions = xmlutil.parse(text, source)
        except XmlSyntaxError as exc:
            self.diagnostics.append(exc.diagnostic())
            return
        line_of = lambda el: positions.get(el, (0, 0))[0]  # noqa: E731
        if root.tag != "api":
            self.error(f"root element must be <api>, not <{root.tag}>", source, line_of(root))
            return
        self._no_attributes(root, (), source, line_of(root))
        self._no_text(root, source, line_of(root), "")
        for child in root:
            line = line_of(child)
            if child.tag not in KINDS:
                self.error(f"unknown element <{child.tag}>", source, line)
                continue
            name = child.get("name")
            if not self._check_name(name, source, line, "", f"<{child.tag}> name"):
                continue
            allowed = ("name", "extends") if child.tag == "bean" else ("name",)
            self._no_attributes(child, allowed, source, line, name)
            self._no_text(child, source, line, name)
            raw = _Raw(child.tag, name, source, line)
            if child.tag == "bean" and "extends" in child.attrib:
                raw.extends = child.get("extends")
                raw.extends_line = line
                self._check_name(raw.extends, source, line, name, "extends")
            if child.tag in ("transaction", "procedure"):
                seen = set()
                for part in child:
                    pline = line_of(part)
                    if part.tag not in ("request", "response"):
                        self.error(f"unknown element <{part.tag}> (expected <request> or <response>)",
                                   source, pline, name)
                        continue
                    if part.tag in seen:
                        self.error(f"<{part.tag}> given twice", source, pline, name)
                        continue
                    seen.add(part.tag)
                    self._no_attributes(part, (), source, pline, name)
                    self._no_text(part, source, pline, name)
                    target = raw.request if part.tag == "request" else raw.response
                    target.extend(self._fields(part, source, name, line_of))
            else:
                raw.fields.extend(self._fields(child, source, name, line_of))
            self._add(raw)

    def _fields(self, parent, source, owner, line_of):
        out = []
        for position, el in enumerate(parent):
            line = line_of(el)
            shape = _FIELD_TAGS.get(el.tag)
            if shape is None:
                self.error(f"unknown element <{el.tag}> in field list", source, line, owner)
                continue
            name = el.get("name")
            if not self._check_name(name, source, line, owner, f"<{el.tag}> name"):
                continue
            self._no_attributes(el, ("name", "type"), source, line, owner, name)
            if len(el) or (el.text or "").strip():
                self.error(f"<{el.tag}> must be empty", source, line, owner, name)
            type_name = el.get("type")
            if type_name is None:
                self.error(f"<{el.tag}> needs a type attribute", source, line, owner, name)
                continue
            if not IDENTIFIER.fullmatch(type_name):
                self.error(f"bad type name {type_name!r}", source, line, owner, name)
                continue
            # Placeholder ref; resolved later.
            fdef = FieldDef(name, shape, TypeRef("unresolved", type_name), position, line)
            out.append(fdef)
        return out

    def _check_name(self, name, source, line, owner, what):
        if name is None:
            self.error(f"{what} is missing", source, line, owner)
            return False
        if not IDENTIFIER.fullmatch(name):
            self.error(f"{what} {name!r} is not an identifier", source, line, owner)
            return False
        return True

    def _no_attributes(self, el, allowed, source, line, owner="", field_name=""):
        for attr in el.attrib:
            if attr not in allowed:
                self.error(f"unknown attribute {attr!r} on <{el.tag}>", source, line, owner, field_name)

    def _no_text(self, el, source, line, owner):
        if xmlutil.own_text(el).strip():
            self.error(f"unexpected text inside <{el.tag}>", source, line, owner)

    def _add(self, raw: _Raw):
        if raw.kind == "screen" and raw.name in BUILTIN_SCREENS:
            self.error(f"screen name {raw.name} is reserved", raw.source, raw.line, raw.name)
            return
        # Beans, screens, transactions and request handlers share one
        # namespace: their generated scaffolds share one directory.
        shared = ("bean", "screen", "transaction", "request")
        kinds = shared if raw.kind in shared else (raw.kind,)
        for kind in kinds:
            other = self.raw[kind].get(raw.name)
            if other is not None:
                self.error(
                    f"duplicate name: {raw.kind} {raw.name} already defined as "
                    f"{other.kind} at {other.source}:{other.line}",
                    raw.source, raw.line, raw.name,
                )
                return
        if raw.kind in shared and raw.name in self.types:
            self.error(f"duplicate name: {raw.name} is a predefined type", raw.source, raw.line, raw.name)
            return
        self.raw[raw.kind][raw.name] = raw

    # -- semantics ---------------------------------------------------------

    def resolve_field(self, raw: _Raw, fdef: FieldDef) -> Optional[FieldDef]:
        type_name = fdef.type.name
        is_bean = type_name in self.raw["bean"]
        is_type = type_name in self.types

        def fail(message):
            self.error(message, raw.source, fdef.line, raw.name, fdef.name)
            return None

        if fdef.shape is Shape.SCALAR:
            if is_type:
                ref = TypeRef("predefined", type_name)
            elif is_bean:
                return fail(f"<param> type {type_name} is a bean; declare it with <bean>")
            else:
                return fail(f"unresolved type reference {type_name!r}")
        elif fdef.shape is Shape.BEAN:
            if is_bean:
                ref = TypeRef("bean", type_name)
            elif is_type:
                return fail(f"<bean> type {type_name} is a predefined type; declare it with <param>")
            else:
                return fail(f"unresolved type reference {type_name!r}")
        else:
            if is_bean:
                ref = TypeRef("bean", type_name)
            elif is_type:
                ref = TypeRef("predefined", type_name)
            else:
                return fail(f"unresolved type reference {type_name!r}")
        return FieldDef(fdef.name, fdef.shape, ref, fdef.position, fdef.line)

    def resolve_list(self, raw, fields):
        out, seen = [], {}
        for fdef in fields:
            if fdef.name in seen:
                self.error(f"duplicate field name {fdef.name}", raw.source, fdef.line, raw.name, fdef.name)
                continue
            seen[fdef.name] = fdef
            resolved = self.resolve_field(raw, fdef)
            if resolved is not None:
                out.append(resolved)
        return tuple(out)

    def build(self, sources) -> ApiDefinition:
        beans: dict[str, BeanDef] = {}
        for raw in self.raw["bean"].values():
            if raw.extends is not None and raw.extends not in self.raw["bean"]:
                self.error(f"extends unknown bean {raw.extends!r}", raw.source, raw.line, raw.name)
                raw.extends = None
            beans[raw.name] = BeanDef(raw.name, self.resolve_list(raw, raw.fields),
                                      raw.extends, raw.source, raw.line)
        screens = {
            r.name: ScreenDef(r.name, self.resolve_list(r, r.fields), r.source, r.line)
            for r in self.raw["screen"].values()
        }
        handlers = {
            r.name: RequestHandlerDef(r.name, self.resolve_list(r, r.fields), r.source, r.line)
            for r in self.raw["request"].values()
        }
        transactions = {}
        for r in self.raw["transaction"].values():
            transactions[r.name] = TransactionDef(
                r.name, self.resolve_list(r, r.request), self.resolve_list(r, r.response), r.source, r.line
            )
        procedures = {}
        for r in self.raw["procedure"].values():
            procedures[r.name] = ProcedureDef(
                r.name, self.resolve_list(r, r.request), self.resolve_list(r, r.response), r.source, r.line
            )

        effective = {}
        if self._check_extends(beans):
            for bean in beans.values():
                effective[bean.name] = self._effective(bean, beans)
            self._check_composition(beans, effective)
        for proc in procedures.values():
            self._check_procedure(proc, beans, effective)
        if self.diagnostics:
            raise DefinitionError(self.diagnostics)
        return ApiDefinition(
            beans=MappingProxyType(beans),
            transactions=MappingProxyType(transactions),
            handlers=MappingProxyType(handlers),
            screens=MappingProxyType(screens),
            procedures=MappingProxyType(procedures),
            sources=tuple(sources),
            types=self.types,
            _effective=MappingProxyType(effective),
        )

    def _check_extends(self, beans) -> bool:
        reported = set()
        for bean in beans.values():
            seen = [bean.name]
            current = bean
            while current.extends is not None:
                if current.extends in seen:
                    loop = seen[seen.index(current.extends):]
                    if frozenset(loop) not in reported:
                        reported.add(frozenset(loop))
                        cycle = " -> ".join(loop + [current.extends])
                        self.error(f"extends cycle {cycle}", current.source, current.line, current.name)
                    break
                seen.append(current.extends)
                current = beans[current.extends]
        return not reported

    def _effective(self, bean, beans):
        fields = _linearize(bean, beans)
        seen = {}
        for fdef in fields:
            if fdef.name in seen and seen[fdef.name] is not fdef:
                self.error(f"field {fdef.name} collides with an inherited field",
                           bean.source, fdef.line, bean.name, fdef.name)
            seen[fdef.name] = fdef
        # Ordinals over the effective list.
        return tuple(
            FieldDef(f.name, f.shape, f.type, i, f.line) for i, f in enumerate(fields)
        )

    def _check_composition(self, beans, effective):
        edges = {
            name: [(f, f.type.name) for f in effective[name] if f.type.is_bean]
            for name in beans
        }
        state: dict[str, int] = {}
        reported = set()

        def visit(name, stack):
            state[name] = 1
            stack.append(name)
            for fdef, target in edges[name]:
                if state.get(target) == 1:
                    cycle = stack[stack.index(target):] + [target]
                    key = frozenset(cycle)
                    if key not in reported:
                        reported.add(key)
                        owner = beans[name]
                        self.error(f"composition cycle {' -> '.join(cycle)}",
                                   owner.source, fdef.line, name, fdef.name)
                elif state.get(target) is None:
                    visit(target, stack)
            stack.pop()
            state[name] = 2

        for name in sorted(beans):
            if name not in state:
                visit(name, [])

    def _check_procedure(self, proc, beans, effective):
        def fail(fdef, message):
            self.error(message, proc.source, fdef.line, proc.name, fdef.name)

        for fdef in proc.request:
            if fdef.shape is Shape.BEAN:
                fail(fdef, "procedure inputs cannot be beans")
            elif fdef.shape is Shape.VECTOR and fdef.type != TypeRef("predefined", "CcString"):
                fail(fdef, "procedure input vectors must be vectors of CcString")
        for fdef in proc.response:
            if fdef.shape is Shape.BEAN:
                fail(fdef, "procedure outputs cannot be beans (use a vector of beans)")
            elif fdef.shape is Shape.VECTOR:
                if not fdef.type.is_bean:
                    fail(fdef, "procedure output vectors must be vectors of beans")
                elif fdef.type.name in effective:
                    nested = [f.name for f in effective[fdef.type.name] if not f.is_scalar]
                    if nested:
                        fail(fdef, f"bean {fdef.type.name} returned as rows must be flat "
                                   f"(non-scalar fields: {', '.join(nested)})")


def parse_definitions(
    sources: Sequence[Union[str, bytes, tuple[str, Union[str, bytes]]]],
    types: TypeRegistry | None = None,
) -> ApiDefinition:
    """Load and validate definition documents.

    Each source is either document text or a ``(name, text)`` pair; the
    name appears in diagnostics.  Raises ``DefinitionError`` listing every
    problem found.
    """
    loader = _Loader(types or BUILTINS)
    names = []
    for index, item in enumerate(sources):
        if isinstance(item, tuple):
            name, text = item
        else:
            name, text = f"<source {index}>", item
        names.append(name)
        loader.read(text, name)
    return loader.build(names)


def definition_files(paths: Iterable[Union[str, Path]]) -> list[Path]:
    """Expand directories to their ``*.api.xml`` files, sorted by name."""
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(p.glob("*.api.xml")))
        else:
            out.append(p)
    return out


def load_files(paths: Iterable[Union[str, Path]], types: TypeRegistry | None = None) -> ApiDefinition:
    files = definition_files(paths)
    return parse_definitions([(str(f), f.read_bytes()) for f in files], types)
