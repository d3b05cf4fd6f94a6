"""Encodings used between tiers.

Documents (all UTF-8, no declaration, no whitespace between elements)::

    <Request name="ServerX"><InputA>...</InputA><InputB>...</InputB></Request>
    <Response name="ServerX"><OutputC>...</OutputC></Response>
    <Screen name="ScreenX"><Customer><Person><FirstName>thomas</FirstName>...
    <Error><Exception class="CcUnavailable"><Message>db down</Message>
      <Cause><Exception class="CcCommunicationError">...</Exception></Cause>
    </Exception></Error>

Scalars travel in canonical form; formatting for display belongs to the
renderer.  Web requests arrive as ``application/x-www-form-urlencoded``
query strings whose keys are dot paths.
"""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union
from urllib.parse import unquote_to_bytes, urlencode

from . import xmlutil
from .apidef import ApiDefinition, FieldDef, FieldSet, Shape, TransactionDef
from .beans import BeanValue, new_bean, read_children, to_xml
from .errors import (
    EXCEPTION_CLASSES,
    CcChainError,
    CcException,
    NotFound,
    StructureError,
    WireError,
    XmlSyntaxError,
)

# Longest cause chain written or read; guards against cyclic __cause__ links
# and hostile documents.
MAX_CHAIN = 64

Values = Mapping[str, Union[str, BeanValue, list]]
Chain = list[tuple[str, str]]


@dataclass
class ScreenInstance:
    """Dynamic data for one screen, as emitted by a request handler."""

    screen: str
    data: BeanValue

    def __post_init__(self):
        if self.data.definition.kind != "screen" or self.data.name != self.screen:
            raise ValueError(f"screen data is a {self.data.name}, not screen {self.screen}")

    def set(self, path, raw: str) -> ScreenInstance:
        self.data.set(path, raw)
        return self

    def get(self, path, mode: str = "canonical") -> str:
        return self.data.get(path, mode)


def new_screen(api: ApiDefinition, name: str) -> ScreenInstance:
    return ScreenInstance(name, new_bean(api, api.screen(name)))


def error_screen(api: ApiDefinition, message: str, exception: str = "") -> ScreenInstance:
    screen = new_screen(api, "CcErrorScreen")
    data = screen.data.values
    data["Message"] = api.types.canonicalize("CcString", xmlutil.xml_safe(message))
    data["Exception"] = api.types.canonicalize("CcString", exception)
    return screen


def _parse(doc: Union[str, bytes, ET.Element]) -> ET.Element:
    if isinstance(doc, ET.Element):
        return doc
    try:
        return xmlutil.parse_root(doc)
    except XmlSyntaxError as exc:
        raise WireError("malformed", f"line {exc.line}: {exc}") from None


# ---------------------------------------------------------------------------
# Parameter lists


def _check_value(api: ApiDefinition, fdef: FieldDef, value, owner: str) -> None:
    where = f"{owner}.{fdef.name}"

    def wrong(expected):
        raise WireError("type-mismatch", f"{where}: expected {expected}, got {value!r}")

    def check_scalar(item, path):
        if not isinstance(item, str):
            wrong(f"canonical {fdef.type.name} text")
        problem = api.types.validate(fdef.type.name, item)
        if problem is not None:
            raise WireError("type-mismatch", f"{path}: {problem.message}")

    def check_bean(item):
        if not isinstance(item, BeanValue) or item.definition.kind != "bean" or item.name != fdef.type.name:
            wrong(f"a {fdef.type.name} bean")

    if fdef.shape is Shape.SCALAR:
        check_scalar(value, where)
    elif fdef.shape is Shape.BEAN:
        check_bean(value)
    else:
        if not isinstance(value, (list, tuple)):
            wrong(f"a list of {fdef.type.name}")
        for index, item in enumerate(value):
            if fdef.type.is_bean:
                check_bean(item)
            else:
                check_scalar(item, f"{where}.{index}")


def pack(api: ApiDefinition, body: FieldSet, values: Values) -> BeanValue:
    """Check named values against a parameter list and wrap them as one bean."""
    fields = {f.name: f for f in body.fields}
    for name in values:
        if name not in fields:
            raise WireError("unknown-field", f"{body.name} has no field {name}")
    bean = new_bean(api, body)
    for fdef in body.fields:
        if fdef.name not in values:
            raise WireError("missing-field", f"{body.name}.{fdef.name} not supplied")
        value = values[fdef.name]
        _check_value(api, fdef, value, body.name)
        bean.values[fdef.name] = list(value) if fdef.is_vector else value
    return bean


def _encode_body(tag: str, name: str, bean: BeanValue) -> bytes:
    elem = to_xml(bean, tag)
    elem.set("name", name)
    return xmlutil.serialize(elem)


def _decode_body(api: ApiDefinition, root: ET.Element, body: FieldSet) -> dict:
    try:
        bean = read_children(new_bean(api, body), root, "")
    except StructureError as exc:
        raise WireError("structure-mismatch", str(exc)) from None
    return dict(bean.values)


def _root_name(root: ET.Element, tag: str) -> str:
    if root.tag == "Error":
        raise decode_exception(root)
    if root.tag != tag:
        raise WireError("structure-mismatch", f"expected <{tag}>, got <{root.tag}>")
    extra = set(root.attrib) - {"name"}
    if extra:
        raise WireError("structure-mismatch", f"unexpected attributes on <{tag}>: {sorted(extra)}")
    name = root.get("name")
    if not name:
        raise WireError("structure-mismatch", f"<{tag}> without a name")
    return name


def _transaction(api: ApiDefinition, t: Union[str, TransactionDef]) -> TransactionDef:
    if isinstance(t, TransactionDef):
        return t
    try:
        return api.lookup("transaction", t)
    except NotFound:
        raise WireError("unknown-transaction", f"no transaction {t!r}") from None


def encode_request(api: ApiDefinition, t: Union[str, TransactionDef], inputs: Values) -> bytes:
    t = _transaction(api, t)
    return _encode_body("Request", t.name, pack(api, t.request_body, inputs))


def decode_request(api: ApiDefinition, doc, expected: str | None = None) -> tuple[TransactionDef, dict]:
    """Decode a request document; returns the transaction and its inputs.

    Type violations in scalar content raise ``ViolationError`` (with the
    dot path); every other problem raises ``WireError``.
    """
    root = _parse(doc)
    if root.tag != "Request":
        raise WireError("structure-mismatch", f"expected <Request>, got <{root.tag}>")
    name = _root_name(root, "Request")
    if expected is not None and name != expected:
        raise WireError("name-mismatch", f"request names {name}, expected {expected}")
    t = _transaction(api, name)
    return t, _decode_body(api, root, t.request_body)


def encode_response(api: ApiDefinition, t: Union[str, TransactionDef], outputs: Values) -> bytes:
    t = _transaction(api, t)
    return _encode_body("Response", t.name, pack(api, t.response_body, outputs))


def decode_response(api: ApiDefinition, t: Union[str, TransactionDef], doc) -> dict:
    """Outputs of a response document.  An ``<Error>`` document is raised as its chain."""
    t = _transaction(api, t)
    root = _parse(doc)
    name = _root_name(root, "Response")
    if name != t.name:
        raise WireError("name-mismatch", f"response names {name}, expected {t.name}")
    return _decode_body(api, root, t.response_body)


def encode_screen(s: ScreenInstance) -> bytes:
    return _encode_body("Screen", s.screen, s.data)


def decode_screen(api: ApiDefinition, doc) -> ScreenInstance:
    root = _parse(doc)
    name = _root_name(root, "Screen")
    try:
        screen = api.screen(name)
    except NotFound:
        raise WireError("unknown-screen", f"screen {name} is not defined") from None
    try:
        data = read_children(new_bean(api, screen), root, "")
    except StructureError as exc:
        raise WireError("structure-mismatch", str(exc)) from None
    return ScreenInstance(name, data)


# ---------------------------------------------------------------------------
# Exceptions


def exception_chain(exc: BaseException) -> Chain:
    """(class name, message) from the final exception down to the root cause."""
    entries: Chain = []
    seen = set()
    current = exc
    while current is not None and id(current) not in seen and len(entries) < MAX_CHAIN:
        seen.add(id(current))
        if isinstance(current, CcChainError) and current.original_class:
            # relayed from another tier: report it under its own name
            entries.append((current.original_class, current.original_message))
        else:
            message = current.message if isinstance(current, CcException) else str(current)
            entries.append((type(current).__name__, message))
        if current.__cause__ is not None:
            current = current.__cause__
        elif not current.__suppress_context__:
            current = current.__context__
        else:
            current = None
    return entries


def build_exception(entries: Sequence[tuple[str, str]]) -> CcException:
    """Recreate exceptions from chain entries, linking each to the next as its cause."""
    if not entries:
        raise WireError("malformed-error-document", "empty exception chain")
    built = []
    for name, message in entries:
        cls = EXCEPTION_CLASSES.get(name)
        if cls is None:
            built.append(CcChainError(f"{name}: {message}", original_class=name, original_message=message))
        else:
            built.append(cls(message))
    for outer, inner in zip(built, built[1:]):
        outer.__cause__ = inner
    return built[0]


def encode_exception(chain: Union[BaseException, Iterable[tuple[str, str]]]) -> bytes:
    entries = exception_chain(chain) if isinstance(chain, BaseException) else list(chain)
    if not entries:
        raise ValueError("empty exception chain")
    root = ET.Element("Error")
    parent = root
    for index, (name, message) in enumerate(entries[:MAX_CHAIN]):
        if index:
            parent = ET.SubElement(parent, "Cause")
        exc_el = ET.SubElement(parent, "Exception", {"class": xmlutil.xml_safe(name)})
        ET.SubElement(exc_el, "Message").text = xmlutil.xml_safe(message) or None
        parent = exc_el
    return xmlutil.serialize(root)


def decode_chain(doc) -> Chain:
    def bad(why):
        return WireError("malformed-error-document", why)

    try:
        root = _parse(doc)
    except WireError as exc:
        raise bad(str(exc)) from None
    if root.tag != "Error" or root.attrib or xmlutil.own_text(root).strip():
        raise bad("expected a bare <Error> element")
    if len(root) != 1:
        raise bad("<Error> must hold exactly one <Exception>")
    entries: Chain = []
    current = root[0]
    while True:
        if current.tag != "Exception":
            raise bad(f"expected <Exception>, got <{current.tag}>")
        if set(current.attrib) != {"class"} or xmlutil.own_text(current).strip():
            raise bad("<Exception> takes exactly one attribute, class")
        parts = {}
        for child in current:
            if child.tag not in ("Message", "Cause") or child.tag in parts:
                raise bad(f"unexpected <{child.tag}> in <Exception>")
            parts[child.tag] = child
        message_el = parts.get("Message")
        if message_el is None or len(message_el) or message_el.attrib:
            raise bad("<Exception> needs a plain <Message>")
        entries.append((current.get("class"), message_el.text or ""))
        if len(entries) > MAX_CHAIN:
            raise bad(f"chain longer than {MAX_CHAIN}")
        cause = parts.get("Cause")
        if cause is None:
            return entries
        if cause.attrib or len(cause) != 1 or xmlutil.own_text(cause).strip():
            raise bad("<Cause> must hold exactly one <Exception>")
        current = cause[0]


def decode_exception(doc) -> CcException:
    return build_exception(decode_chain(doc))


def is_error_document(doc: bytes) -> bool:
    try:
        return _parse(doc).tag == "Error"
    except WireError:
        return False


# ---------------------------------------------------------------------------
# Query strings

_BAD_ESCAPE = re.compile(r"%(?![0-9A-Fa-f]{2})")


def _unquote(text: str, whole: str) -> str:
    if _BAD_ESCAPE.search(text):
        raise WireError("malformed-escape", f"bad percent escape in {whole!r}")
    try:
        return unquote_to_bytes(text.replace("+", " ")).decode("utf-8")
    except UnicodeDecodeError:
        raise WireError("malformed-escape", f"escapes in {whole!r} are not UTF-8") from None


def parse_query(query: str) -> list[tuple[str, str]]:
    """Ordered (key, value) pairs; duplicates kept, ``+`` is a space."""
    if query.startswith("?"):
        query = query[1:]
    pairs = []
    for part in query.split("&"):
        if not part:
            continue
        key, _, value = part.partition("=")
        pairs.append((_unquote(key, part), _unquote(value, part)))
    return pairs


def encode_query(params: Union[Mapping[str, str], Iterable[tuple[str, str]]]) -> str:
    items = params.items() if isinstance(params, Mapping) else params
    return urlencode(list(items))


def query_dict(pairs: Iterable[tuple[str, str]]) -> dict[str, str]:
    """Collapse a multimap; the last value of a repeated key wins."""
    return dict(pairs)


__all__ = [
    "ScreenInstance",
    "build_exception",
    "decode_chain",
    "decode_exception",
    "decode_request",
    "decode_response",
    "decode_screen",
    "encode_exception",
    "encode_query",
    "encode_request",
    "encode_response",
    "encode_screen",
    "error_screen",
    "exception_chain",
    "new_screen",
    "pack",
    "parse_query",
    "query_dict",
]
