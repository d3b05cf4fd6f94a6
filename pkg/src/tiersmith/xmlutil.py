"""Strict XML reading and deterministic XML writing."""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from xml.parsers import expat

from .errors import XmlSyntaxError

Element = ET.Element

# Characters XML 1.0 can carry in text and attribute values.
_XML_CHARS = "\t\n\r\x20-\ud7ff\ue000-\ufffd\U00010000-\U0010ffff"
_INVALID_XML = re.compile(f"[^{_XML_CHARS}]")


class _NoDoctype(Exception):
    pass


def parse(data: str | bytes, source: str = "") -> tuple[Element, dict[Element, tuple[int, int]]]:
    """Parse a document, returning the root and a map element -> (line, column).

    Document type declarations are refused outright, which also rules out
    custom entities.
    """
    builder = ET.TreeBuilder()
    positions: dict[Element, tuple[int, int]] = {}
    parser = expat.ParserCreate()

    def start(tag, attrs):
        elem = builder.start(tag, attrs)
        positions[elem] = (parser.CurrentLineNumber, parser.CurrentColumnNumber + 1)

    def doctype(*_args):
        raise _NoDoctype()

    parser.StartElementHandler = start
    parser.EndElementHandler = builder.end
    parser.CharacterDataHandler = builder.data
    parser.StartDoctypeDeclHandler = doctype
    try:
        parser.Parse(data, True)
    except expat.ExpatError as exc:
        raise XmlSyntaxError(
            f"malformed XML: {expat.ErrorString(exc.code)}",
            source,
            exc.lineno,
            exc.offset + 1,
        ) from None
    except _NoDoctype:
        raise XmlSyntaxError(
            "document type declarations are not allowed",
            source,
            parser.CurrentLineNumber,
            parser.CurrentColumnNumber + 1,
        ) from None
    return builder.close(), positions


def parse_root(data: str | bytes, source: str = "") -> Element:
    return parse(data, source)[0]


def serialize(elem: Element) -> bytes:
    """UTF-8 bytes, no declaration, no added whitespace."""
    return ET.tostring(elem, encoding="unicode", short_empty_elements=True).encode("utf-8")


def xml_safe(text: str) -> str:
    """Replace characters XML cannot represent; normalise line ends."""
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return _INVALID_XML.sub("\ufffd", text)


def has_invalid_chars(text: str) -> bool:
    return _INVALID_XML.search(text) is not None


def own_text(elem: Element) -> str:
    """Text directly inside ``elem`` (its leading text plus child tails)."""
    parts = [elem.text or ""]
    parts.extend(child.tail or "" for child in elem)
    return "".join(parts)
