"""Render screens to HTML from page-structure documents.

A page structure names the functional parts of a page and binds them to
screen data by dot path::

    <Screen name="Search">
      <Header>Example Application</Header>
      <Navigation><MenuItem href="/page/Search">Search</MenuItem></Navigation>
      <Content>
        <Title>Customer Search</Title>
        <Form href="/page/SearchHandler">
          <InputField prop="Customer.Address.City">City:</InputField>
        </Form>
        <ForEach prop="Result"><Data prop="LastName"/></ForEach>
        <If prop="Notice"><Data prop="Notice"/></If>
      </Content>
      <Promo/>
      <Footer>2008</Footer>
    </Screen>

``Macro``/``UseMacro`` define and reuse named fragments.  Colours, fonts
and a few labels come from a separate decoration document and end up in
one ``<style>`` block, so a restyle never touches structure files.
"""
from __future__ import annotations

import html
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Optional, Union

from . import xmlutil
from .apidef import ApiDefinition, Body
from .beans import BeanValue, join, resolve_path
from .errors import (
    DefinitionError,
    Diagnostic,
    NotFound,
    PathError,
    ViolationError,
    XmlSyntaxError,
)
from .wire import ScreenInstance, error_screen

# tag -> (allowed attributes, required attributes)
VOCABULARY: Mapping[str, tuple[frozenset, frozenset]] = MappingProxyType({
    "Screen": (frozenset({"name"}), frozenset({"name"})),
    "Header": (frozenset(), frozenset()),
    "Footer": (frozenset(), frozenset()),
    "Navigation": (frozenset(), frozenset()),
    "MenuItem": (frozenset({"href"}), frozenset({"href"})),
    "Content": (frozenset(), frozenset()),
    "Title": (frozenset(), frozenset()),
    "Form": (frozenset({"href"}), frozenset({"href"})),
    "InputField": (frozenset({"prop"}), frozenset({"prop"})),
    "Promo": (frozenset(), frozenset()),
    "Data": (frozenset({"prop"}), frozenset()),
    "ForEach": (frozenset({"prop"}), frozenset({"prop"})),
    "If": (frozenset({"prop", "equals"}), frozenset()),
    "Macro": (frozenset({"name"}), frozenset({"name"})),
    "UseMacro": (frozenset({"name"}), frozenset({"name"})),
})

# Elements that hold only text (or nothing).
_LEAVES = {"MenuItem", "InputField", "Data", "UseMacro"}

_CONTAINERS = {
    "Header": ("header", "header"),
    "Footer": ("footer", "footer"),
    "Navigation": ("nav", "navigation"),
    "Content": ("main", "content"),
    "Title": ("h1", "title"),
    "Promo": ("aside", "promo"),
}


@dataclass(frozen=True)
class Node:
    tag: str
    attrs: Mapping[str, str] = field(default_factory=dict)
    text: str = ""
    tail: str = ""
    children: tuple[Node, ...] = ()
    type_name: str = ""  # scalar type behind prop, when there is one
    item_scalar: bool = False  # ForEach over a vector of scalars


@dataclass(frozen=True)
class PageStructure:
    screen: str
    root: Node
    source: str = ""


# ---------------------------------------------------------------------------
# Decoration

_COLOR = r"#[0-9A-Fa-f]{3}(?:[0-9A-Fa-f]{3})?|[A-Za-z]+"
_SIZE = r"[0-9]+(?:\.[0-9]+)?(?:px|pt|em|rem|%)"

DECORATION_KEYS: Mapping[str, str] = MappingProxyType({
    "SiteTitle": r"[^\r\n]+",
    "FooterYear": r"[0-9]{4}",
    "SubmitLabel": r"[^\r\n]+",
    "FontFace": r"[A-Za-z0-9 ,'\-]+",
    "FontSize": _SIZE,
    "TitleFontSize": _SIZE,
    "TextColor": _COLOR,
    "BackgroundColor": _COLOR,
    "HeaderColor": _COLOR,
    "LinkColor": _COLOR,
    "AccentColor": _COLOR,
})

DECORATION_DEFAULTS: Mapping[str, str] = MappingProxyType({
    "SiteTitle": "tiersmith",
    "FooterYear": "",
    "SubmitLabel": "Submit",
    "FontFace": "Helvetica, Arial, sans-serif",
    "FontSize": "14px",
    "TitleFontSize": "20px",
    "TextColor": "#222222",
    "BackgroundColor": "#ffffff",
    "HeaderColor": "#dde4ee",
    "LinkColor": "#1a4f8b",
    "AccentColor": "#666666",
})


@dataclass(frozen=True)
class Decoration:
    values: Mapping[str, str] = DECORATION_DEFAULTS

    @classmethod
    def from_mapping(cls, overrides: Mapping[str, str]) -> Decoration:
        problems = []
        for key, value in overrides.items():
            pattern = DECORATION_KEYS.get(key)
            if pattern is None:
                problems.append(f"unknown decoration key {key!r}")
            elif not re.fullmatch(pattern, value):
                problems.append(f"bad value for {key}: {value!r}")
        if problems:
            raise ValueError("; ".join(problems))
        merged = dict(DECORATION_DEFAULTS)
        merged.update(overrides)
        return cls(MappingProxyType(merged))

    @classmethod
    def load(cls, doc: Union[str, bytes], source: str = "decoration.xml") -> Decoration:
        """Parse ``<Decoration><SiteTitle>...</SiteTitle>...</Decoration>``."""
        try:
            root, positions = xmlutil.parse(doc, source)
        except XmlSyntaxError as exc:
            raise DefinitionError([exc.diagnostic()]) from None
        diagnostics = []
        if root.tag != "Decoration":
            diagnostics.append(Diagnostic("root element must be <Decoration>", source, positions[root][0]))
        values = {}
        for child in root:
            line = positions.get(child, (0, 0))[0]
            if child.tag in values:
                diagnostics.append(Diagnostic(f"{child.tag} given twice", source, line))
            elif len(child) or child.attrib:
                diagnostics.append(Diagnostic(f"<{child.tag}> must hold plain text", source, line))
            else:
                values[child.tag] = (child.text or "").strip()
                try:
                    cls.from_mapping({child.tag: values[child.tag]})
                except ValueError as exc:
                    diagnostics.append(Diagnostic(str(exc), source, line))
        if diagnostics:
            raise DefinitionError(diagnostics)
        return cls.from_mapping(values)

    def __getitem__(self, key: str) -> str:
        return self.values[key]

    def style(self) -> str:
        v = self.values
        return (
            f"body {{ font-family: {v['FontFace']}; font-size: {v['FontSize']}; "
            f"color: {v['TextColor']}; background: {v['BackgroundColor']}; }}\n"
            f".header {{ background: {v['HeaderColor']}; }}\n"
            f".title {{ font-size: {v['TitleFontSize']}; }}\n"
            f"a {{ color: {v['LinkColor']}; }}\n"
            f".promo, .footer {{ color: {v['AccentColor']}; }}\n"
        )


# ---------------------------------------------------------------------------
# Loading


class _StructureLoader:
    def __init__(self, api: ApiDefinition, source: str):
        self.api = api
        self.source = source
        self.diagnostics: list[Diagnostic] = []
        self.positions: dict = {}
        self.macros: dict = {}

    def error(self, message, elem=None):
        line, column = self.positions.get(elem, (0, 0)) if elem is not None else (0, 0)
        self.diagnostics.append(Diagnostic(message, self.source, line, column))

    def load(self, doc, expected: Optional[str]) -> Optional[PageStructure]:
        try:
            root, self.positions = xmlutil.parse(doc, self.source)
        except XmlSyntaxError as exc:
            self.diagnostics.append(exc.diagnostic())
            return None
        if root.tag != "Screen":
            self.error(f"root element must be <Screen>, not <{root.tag}>", root)
            return None
        if not self._attributes(root):
            return None
        name = root.get("name")
        if expected is not None and name != expected:
            self.error(f"root-name mismatch: structure is for screen {name}, expected {expected}", root)
            return None
        try:
            screen = self.api.screen(name)
        except NotFound:
            self.error(f"screen {name} is not defined", root)
            return None
        for child in root:
            if child.tag == "Macro" and self._attributes(child):
                macro = child.get("name")
                if macro in self.macros:
                    self.error(f"macro {macro} defined twice", child)
                self.macros[macro] = child
        children = []
        for child in root:
            if child.tag == "Macro":
                continue
            children.extend(self._build(child, screen, "", ()))
        node = Node("Screen", dict(root.attrib), self._text(root.text), "", tuple(children))
        return PageStructure(name, node, self.source)

    @staticmethod
    def _text(text: Optional[str]) -> str:
        if not text:
            return ""
        if not text.strip() and "\n" in text:
            return ""
        return re.sub(r"\s+", " ", text)

    def _attributes(self, elem) -> bool:
        allowed, required = VOCABULARY[elem.tag]
        ok = True
        for attr in elem.attrib:
            if attr not in allowed:
                self.error(f"unknown attribute {attr!r} on <{elem.tag}>", elem)
                ok = False
        for attr in required - set(elem.attrib):
            self.error(f"<{elem.tag}> needs attribute {attr!r}", elem)
            ok = False
        return ok

    def _scalar_prop(self, elem, body, item_scalar: str) -> str:
        prop = elem.get("prop")
        if item_scalar:
            if prop is not None:
                self.error(f"bad-prop-path: {prop} (inside ForEach over scalars use no prop)", elem)
                return ""
            return item_scalar
        if prop is None:
            self.error(f"<{elem.tag}> needs attribute 'prop'", elem)
            return ""
        try:
            info = resolve_path(self.api, body, prop)
        except PathError as exc:
            self.error(f"bad-prop-path: {prop} ({exc})", elem)
            return ""
        if info.terminal != "scalar":
            self.error(f"bad-prop-path: {prop} is not a scalar field", elem)
            return ""
        return info.type_name

    def _build(self, elem, body: Optional[Body], item_scalar: str, expanding: tuple) -> list[Node]:
        # item_scalar is the element type while inside a ForEach over scalars, else ""
        tag = elem.tag
        if tag not in VOCABULARY:
            self.error(f"unknown element <{tag}>", elem)
            return []
        if tag in ("Screen", "Macro"):
            self.error(f"<{tag}> is only allowed at the top of a structure", elem)
            return []
        if not self._attributes(elem):
            return []
        tail = self._text(elem.tail)
        if tag in _LEAVES:
            if len(elem):
                self.error(f"<{tag}> cannot contain elements", elem)
                return []
            if tag == "Data" and (elem.text or "").strip():
                self.error("<Data> must be empty", elem)
        if tag == "UseMacro":
            name = elem.get("name")
            macro = self.macros.get(name)
            if macro is None:
                self.error(f"unknown macro {name}", elem)
                return []
            if name in expanding:
                self.error(f"recursive macro {' -> '.join(expanding + (name,))}", elem)
                return []
            nodes = []
            lead = self._text(macro.text)
            if lead:
                nodes.append(Node("#text", text=lead))
            for child in macro:
                nodes.extend(self._build(child, body, item_scalar, expanding + (name,)))
            if tail:
                nodes.append(Node("#text", text=tail))
            return nodes

        type_name = ""
        child_body, child_scalar = body, item_scalar
        if tag in ("Data", "InputField"):
            if tag == "InputField" and item_scalar:
                self.error("bad-prop-path: InputField inside ForEach over scalars", elem)
            else:
                type_name = self._scalar_prop(elem, body, item_scalar)
        elif tag == "If":
            type_name = self._scalar_prop(elem, body, item_scalar)
        elif tag == "ForEach":
            prop = elem.get("prop")
            if item_scalar:
                self.error(f"bad-prop-path: {prop} (ForEach inside ForEach over scalars)", elem)
                return []
            try:
                info = resolve_path(self.api, body, prop)
            except PathError as exc:
                self.error(f"bad-prop-path: {prop} ({exc})", elem)
                return []
            if info.terminal != "vector":
                self.error(f"bad-prop-path: ForEach over {prop}, which is not a vector", elem)
                return []
            if info.field.type.is_bean:
                child_body = self.api.bean(info.field.type.name)
                child_scalar = ""
            else:
                child_body, child_scalar = None, info.field.type.name
                type_name = info.field.type.name

        children = []
        for child in elem:
            children.extend(self._build(child, child_body, child_scalar, expanding))
        return [Node(
            tag,
            dict(elem.attrib),
            self._text(elem.text),
            tail,
            tuple(children),
            type_name,
            bool(child_scalar if tag == "ForEach" else item_scalar),
        )]


def load_structure(
    api: ApiDefinition,
    doc: Union[str, bytes],
    source: str = "<structure>",
    expected: Optional[str] = None,
) -> PageStructure:
    """Parse and validate a page structure against the screen it names.

    Raises ``DefinitionError`` listing unknown elements, bad prop paths,
    root-name mismatches and macro problems.
    """
    loader = _StructureLoader(api, source)
    structure = loader.load(doc, expected)
    if loader.diagnostics or structure is None:
        raise DefinitionError(loader.diagnostics)
    return structure


# ---------------------------------------------------------------------------
# Rendering


class _Renderer:
    def __init__(self, structure: PageStructure, screen: ScreenInstance, deco: Decoration):
        self.structure = structure
        self.screen = screen
        self.deco = deco
        self.types = screen.data.api.types
        self.out: list[str] = []

    def emit(self, text: str) -> None:
        self.out.append(text)

    def text(self, text: str) -> None:
        if text:
            self.out.append(html.escape(text, quote=False))

    def display(self, type_name: str, canonical: str) -> str:
        try:
            return self.types.format(type_name, canonical)
        except ViolationError:
            return ""

    def lookup(self, ctx, node: Node) -> tuple[str, str]:
        """(absolute path, canonical value) for a node's prop in context."""
        value_ctx, prefix = ctx
        prop = node.attrs.get("prop")
        if isinstance(value_ctx, BeanValue):
            return join(prefix, prop), value_ctx.get(prop)
        return prefix, value_ctx

    def page(self) -> str:
        s = self.structure
        title = f"{self.deco['SiteTitle']} - {s.screen}"
        self.emit("<!DOCTYPE html>\n")
        self.emit('<html><head><meta charset="utf-8"/>')
        self.emit(f"<title>{html.escape(title)}</title>")
        self.emit(f"<style>\n{self.deco.style()}</style></head>")
        self.emit(f'<body class="screen screen-{html.escape(s.screen)}">')
        ctx = (self.screen.data, "")
        self.text(s.root.text)
        self.children(s.root, ctx)
        self.emit("</body></html>\n")
        return "".join(self.out)

    def children(self, node: Node, ctx) -> None:
        for child in node.children:
            self.node(child, ctx)
            self.text(child.tail)

    def node(self, node: Node, ctx) -> None:
        tag = node.tag
        if tag == "#text":
            self.text(node.text)
        elif tag in _CONTAINERS:
            element, css = _CONTAINERS[tag]
            self.emit(f'<{element} class="{css}">')
            self.text(node.text)
            self.children(node, ctx)
            if tag == "Footer" and not node.text and not node.children and self.deco["FooterYear"]:
                self.text(self.deco["FooterYear"])
            self.emit(f"</{element}>")
        elif tag == "MenuItem":
            href = html.escape(node.attrs["href"])
            self.emit(f'<a class="menu-item" href="{href}">')
            self.text(node.text)
            self.emit("</a>")
        elif tag == "Form":
            action = html.escape(node.attrs["href"])
            self.emit(f'<form class="form" method="get" action="{action}">')
            self.text(node.text)
            self.children(node, ctx)
            label = html.escape(self.deco["SubmitLabel"])
            self.emit(f'<button type="submit">{label}</button></form>')
        elif tag == "InputField":
            path, value = self.lookup(ctx, node)
            shown = html.escape(self.display(node.type_name, value))
            self.emit('<label class="input-field"><span class="label">')
            self.text(node.text)
            self.emit(f'</span><input type="text" name="{html.escape(path)}" value="{shown}"/></label>')
        elif tag == "Data":
            path, value = self.lookup(ctx, node)
            self.emit(f'<span class="data" data-prop="{html.escape(path)}">')
            self.text(self.display(node.type_name, value))
            self.emit("</span>")
        elif tag == "If":
            _, value = self.lookup(ctx, node)
            expected = node.attrs.get("equals")
            if value == expected if expected is not None else value != "":
                self.text(node.text)
                self.children(node, ctx)
        elif tag == "ForEach":
            path, _ = self.lookup_vector(ctx, node)
            items = self.vector(ctx, node)
            self.emit(f'<div class="for-each" data-prop="{html.escape(path)}">')
            for index, item in enumerate(items):
                self.emit('<div class="item">')
                item_ctx = (item, join(path, index))
                self.text(node.text)
                self.children(node, item_ctx)
                self.emit("</div>")
            self.emit("</div>")
        else:  # pragma: no cover - loader rejects everything else
            raise ValueError(f"cannot render <{tag}>")

    def lookup_vector(self, ctx, node: Node) -> tuple[str, None]:
        _, prefix = ctx
        return join(prefix, node.attrs["prop"]), None

    def vector(self, ctx, node: Node) -> list:
        value_ctx, _ = ctx
        current = value_ctx
        for seg in node.attrs["prop"].split("."):
            if isinstance(current, BeanValue):
                current = current.values[seg]
            else:
                index = int(seg)
                if index >= len(current):
                    return []
                current = current[index]
        return current


def render(structure: PageStructure, screen: ScreenInstance, deco: Optional[Decoration] = None) -> str:
    """HTML for ``screen`` laid out by ``structure``.  Pure and deterministic."""
    if structure.screen != screen.screen:
        raise ValueError(f"screen-mismatch: structure is for {structure.screen}, data is {screen.screen}")
    return _Renderer(structure, screen, deco or Decoration()).page()


# ---------------------------------------------------------------------------
# Structure registry

ERROR_SCREEN = "CcErrorScreen"

BUILTIN_ERROR_STRUCTURE = """\
<Screen name="CcErrorScreen">
  <Header>Error</Header>
  <Content>
    <Title>The request could not be completed</Title>
    <Data prop="Message"/>
    <If prop="Exception"> (<Data prop="Exception"/>)</If>
  </Content>
</Screen>
"""


class StructureNotFound(NotFound):
    def __init__(self, name: str):
        super().__init__("page structure", name)


class PageRegistry:
    """Finds ``<Screen>.page.xml`` structures in one directory."""

    def __init__(self, api: ApiDefinition, directory: Union[str, Path, None] = None,
                 decoration: Optional[Decoration] = None):
        self.api = api
        self.directory = Path(directory) if directory is not None else None
        self.decoration = decoration or Decoration()
        self._cache: dict[str, PageStructure] = {}
        self._lock = threading.Lock()

    def path_for(self, name: str) -> Optional[Path]:
        if self.directory is None:
            return None
        return self.directory / f"{name}.page.xml"

    def resolve(self, name: str) -> PageStructure:
        with self._lock:
            cached = self._cache.get(name)
        if cached is not None:
            return cached
        path = self.path_for(name)
        if path is not None and re.fullmatch(r"[A-Za-z][A-Za-z0-9]*", name) and path.is_file():
            structure = load_structure(self.api, path.read_bytes(), str(path), expected=name)
        elif name == ERROR_SCREEN:
            structure = load_structure(self.api, BUILTIN_ERROR_STRUCTURE, "<builtin>", expected=name)
        else:
            raise StructureNotFound(name)
        with self._lock:
            self._cache[name] = structure
        return structure

    def check(self) -> list[Diagnostic]:
        """Load every structure in the directory; return all problems found."""
        problems = []
        if self.directory is None:
            return problems
        for path in sorted(self.directory.glob("*.page.xml")):
            name = path.name[: -len(".page.xml")]
            try:
                self.resolve(name)
            except DefinitionError as exc:
                problems.extend(exc.diagnostics)
        return problems

    def render(self, screen: ScreenInstance) -> str:
        """Full pipeline: find the structure for the screen and render it.

        A screen without a structure renders the built-in error page.
        """
        try:
            structure = self.resolve(screen.screen)
        except StructureNotFound:
            screen = error_screen(self.api, f"no page structure for screen {screen.screen}",
                                  "StructureNotFound")
            structure = self.resolve(ERROR_SCREEN)
        return render(structure, screen, self.decoration)


def resolve_screen_to_structure(registry: PageRegistry, name: str) -> PageStructure:
    return registry.resolve(name)
