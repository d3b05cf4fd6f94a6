import random
import re
import threading
import xml.etree.ElementTree as ET

import pytest

from tiersmith.apidef import parse_definitions
from tiersmith.beans import to_flat
from tiersmith.errors import DefinitionError
from tiersmith.render import (
    BUILTIN_ERROR_STRUCTURE,
    ERROR_SCREEN,
    Decoration,
    PageRegistry,
    StructureNotFound,
    load_structure,
    render,
    resolve_screen_to_structure,
)
from tiersmith.wire import error_screen, new_screen

from conftest import DATA
from generators import fill, random_api, random_structure
from htmlcheck import MalformedHtml, check_html


def diagnostics(api, doc, expected=None):
    with pytest.raises(DefinitionError) as info:
        load_structure(api, doc, expected=expected)
    return " | ".join(d.message for d in info.value.diagnostics)


def strict_xml(page):
    """The renderer's output is also well-formed XML once the doctype is gone."""
    return ET.fromstring(page.split("\n", 1)[1])


@pytest.fixture(scope="module")
def search(api):
    return load_structure(api, (DATA / "Search.page.xml").read_bytes(), expected="Search")


class TestLoad:
    def test_search_structure(self, search):
        regions = [n.tag for n in search.root.children]
        assert regions == ["Header", "Navigation", "Content", "Promo", "Footer"]
        inputs = [n for n in _walk(search.root) if n.tag == "InputField"]
        assert [n.attrs["prop"] for n in inputs] == ["Customer.Address.City"]
        assert inputs[0].type_name == "CcName"

    def test_bad_prop_path(self, api):
        assert "bad-prop-path" in diagnostics(api, '<Screen name="Search"><Data prop="Nope.Y"/></Screen>')

    def test_prop_naming_a_bean(self, api):
        assert "bad-prop-path" in diagnostics(api, '<Screen name="Search"><Data prop="Customer"/></Screen>')

    def test_for_each_over_scalar(self, api):
        assert "bad-prop-path" in diagnostics(api, '<Screen name="Search"><ForEach prop="Notice"/></Screen>')

    def test_for_each_rebinds_context(self, api):
        doc = '<Screen name="Results"><ForEach prop="Result"><Data prop="LastName"/></ForEach></Screen>'
        load_structure(api, doc)
        bad = '<Screen name="Results"><ForEach prop="Result"><Data prop="Count"/></ForEach></Screen>'
        assert "bad-prop-path" in diagnostics(api, bad)

    def test_unknown_element(self, api):
        assert "unknown element <Marquee>" in diagnostics(api, '<Screen name="Search"><Marquee/></Screen>')

    def test_unknown_attribute(self, api):
        assert "unknown attribute" in diagnostics(api, '<Screen name="Search"><Header style="x"/></Screen>')

    def test_root_name_mismatch(self, api):
        assert "root-name mismatch" in diagnostics(api, '<Screen name="Results"/>', expected="Search")

    def test_undefined_screen(self, api):
        assert "not defined" in diagnostics(api, '<Screen name="Nowhere"/>')

    def test_root_must_be_screen(self, api):
        assert "<Screen>" in diagnostics(api, "<Page/>")

    def test_macro(self, api):
        doc = ('<Screen name="Search"><Macro name="Nav"><Navigation><MenuItem href="/">Home</MenuItem></Navigation>'
               '</Macro><Header/><UseMacro name="Nav"/><Content/><UseMacro name="Nav"/></Screen>')
        s = load_structure(api, doc)
        assert [n.tag for n in s.root.children] == ["Header", "Navigation", "Content", "Navigation"]

    def test_macro_recursion(self, api):
        doc = ('<Screen name="Search"><Macro name="A"><Header><UseMacro name="B"/></Header></Macro>'
               '<Macro name="B"><UseMacro name="A"/></Macro><UseMacro name="A"/></Screen>')
        assert "recursive macro A -> B -> A" in diagnostics(api, doc)

    def test_unknown_macro(self, api):
        assert "unknown macro" in diagnostics(api, '<Screen name="Search"><UseMacro name="X"/></Screen>')

    def test_syntax_error_located(self, api):
        with pytest.raises(DefinitionError) as info:
            load_structure(api, '<Screen name="Search">\n<Header>\n</Screen>', source="s.page.xml")
        (d,) = info.value.diagnostics
        assert d.source == "s.page.xml" and d.line == 3

    def test_leaf_cannot_nest(self, api):
        doc = '<Screen name="Search"><MenuItem href="/"><Header/></MenuItem></Screen>'
        assert "cannot contain" in diagnostics(api, doc)


class TestRender:
    def test_search_empty_customer(self, api, search):
        page = render(search, new_screen(api, "Search"))
        checker = check_html(page)
        assert checker.inputs == [("Customer.Address.City", "")]
        assert 'name="Customer.Address.City" value=""' in page
        body = strict_xml(page).find("body")
        assert [(e.tag, e.get("class")) for e in body] == [
            ("header", "header"), ("nav", "navigation"), ("main", "content"), ("aside", "promo"), ("footer", "footer")]
        form = body.find("main/form")
        assert form.get("method") == "get" and form.get("action") == "results.html"
        assert [a.get("href") for a in body.iter("a")] == ["home.html", "search.html"]

    def test_input_shows_display_form(self, api, search):
        s = new_screen(api, "Search").set("Customer.Address.City", "BOSTON")
        assert check_html(render(search, s)).inputs == [("Customer.Address.City", "Boston")]

    def test_data_display(self, api):
        st = load_structure(api, '<Screen name="Search"><Data prop="Customer.Person.FirstName"/>'
                                 '<Data prop="Customer.Phone"/></Screen>')
        s = new_screen(api, "Search").set("Customer.Person.FirstName", "thomas").set("Customer.Phone", "1234567890")
        page = render(st, s)
        assert ">Thomas</span>" in page and ">(123)456-7890</span>" in page
        assert "thomas" not in page.split("<body", 1)[1] and "1234567890" not in page

    def test_for_each_rows_in_order(self, api):
        st = load_structure(api, '<Screen name="Results"><ForEach prop="Result"><Data prop="LastName"/>'
                                 '</ForEach></Screen>')
        s = new_screen(api, "Results")
        for i, name in enumerate(["smith", "jones", "lee"]):
            s.set(f"Result.{i}.LastName", name)
        body = strict_xml(render(st, s)).find("body")
        items = body.findall("div/div")
        assert [i.findtext("span") for i in items] == ["Smith", "Jones", "Lee"]
        assert [i.find("span").get("data-prop") for i in items] == [f"Result.{i}.LastName" for i in range(3)]

    @pytest.mark.parametrize("count", range(11))
    def test_for_each_count(self, api, count):
        st = load_structure(api, '<Screen name="Results"><ForEach prop="Result"><Data prop="FirstName"/>'
                                 '</ForEach></Screen>')
        s = new_screen(api, "Results")
        for i in range(count):
            s.set(f"Result.{i}.FirstName", "x")
        assert len(strict_xml(render(st, s)).findall("body/div/div")) == count

    def test_for_each_scalars(self):
        api = parse_definitions(['<api><screen name="S"><vector name="Tags" type="CcName"/></screen></api>'])
        st = load_structure(api, '<Screen name="S"><ForEach prop="Tags"><Data/><If equals="bob">!</If>'
                                 '</ForEach></Screen>')
        s = new_screen(api, "S")
        s.data.values["Tags"] = ["ann", "bob"]
        items = strict_xml(render(st, s)).findall("body/div/div")
        assert ["".join(i.itertext()) for i in items] == ["Ann", "Bob!"]

    @pytest.mark.parametrize("zip_value, equals, shown", [
        ("", "", True),
        ("12345", "", False),
        ("12345", "12345", True),
        ("12345", None, True),
        ("", None, False),
    ])
    def test_if(self, api, zip_value, equals, shown):
        cond = f' equals="{equals}"' if equals is not None else ""
        st = load_structure(api, f'<Screen name="Search"><If prop="Customer.Address.Zip"{cond}>HIT</If></Screen>')
        s = new_screen(api, "Search").set("Customer.Address.Zip", zip_value)
        assert ("HIT" in render(st, s)) is shown

    def test_escaping(self, api):
        st = load_structure(api, '<Screen name="Search"><Header>a &amp; b</Header><Data prop="Notice"/>'
                                 '<InputField prop="Notice">n</InputField></Screen>')
        s = new_screen(api, "Search").set("Notice", '<script>"x"</script>')
        page = render(st, s)
        assert "<script>" not in page
        assert check_html(page).inputs == [("Notice", '<script>"x"</script>')]

    def test_screen_mismatch(self, api, search):
        with pytest.raises(ValueError, match="screen-mismatch"):
            render(search, new_screen(api, "Results"))

    def test_decoration_in_single_style_block(self, api, search):
        deco = Decoration.from_mapping({"HeaderColor": "#abcdef", "SiteTitle": "Shop", "SubmitLabel": "Go"})
        page = render(search, new_screen(api, "Search"), deco)
        assert page.count("<style>") == 1 and "#abcdef" in page
        assert "<title>Shop - Search</title>" in page and ">Go</button>" in page

    def test_empty_footer_gets_year(self, api):
        st = load_structure(api, '<Screen name="Search"><Footer/></Screen>')
        page = render(st, new_screen(api, "Search"), Decoration.from_mapping({"FooterYear": "2008"}))
        assert '<footer class="footer">2008</footer>' in page

    def test_pure(self, api, search):
        s = new_screen(api, "Search").set("Customer.Address.City", "boston")
        before = to_flat(s.data)
        pages = {render(search, s) for _ in range(5)}
        assert len(pages) == 1 and to_flat(s.data) == before


class TestDecoration:
    def test_load(self):
        deco = Decoration.load("<Decoration><SiteTitle>Shop</SiteTitle><FontSize>12px</FontSize></Decoration>")
        assert deco["SiteTitle"] == "Shop" and deco["FontSize"] == "12px"

    @pytest.mark.parametrize("doc", [
        "<Decoration><Sparkles>yes</Sparkles></Decoration>",
        "<Decoration><FontSize>huge</FontSize></Decoration>",
        "<Decoration><HeaderColor>red; }</HeaderColor></Decoration>",
        "<Style/>",
        "<Decoration><SiteTitle>a</SiteTitle><SiteTitle>b</SiteTitle></Decoration>",
    ])
    def test_rejected(self, doc):
        with pytest.raises(DefinitionError):
            Decoration.load(doc)

    def test_unknown_key_mapping(self):
        with pytest.raises(ValueError):
            Decoration.from_mapping({"Glitter": "1"})


class TestRegistry:
    def test_resolve(self, api, tmp_path):
        (tmp_path / "Search.page.xml").write_bytes((DATA / "Search.page.xml").read_bytes())
        reg = PageRegistry(api, tmp_path)
        assert resolve_screen_to_structure(reg, "Search").screen == "Search"
        assert reg.resolve("Search") is reg.resolve("Search")

    def test_missing(self, api, tmp_path):
        reg = PageRegistry(api, tmp_path)
        with pytest.raises(StructureNotFound):
            reg.resolve("Results")
        page = reg.render(new_screen(api, "Results"))
        check_html(page)
        assert "no page structure for screen Results" in page

    def test_error_screen_builtin(self, api):
        reg = PageRegistry(api)
        assert reg.resolve(ERROR_SCREEN).screen == ERROR_SCREEN
        page = reg.render(error_screen(api, "it broke", "CcSystemError"))
        check_html(page)
        assert "it broke" in page and "CcSystemError" in page
        assert load_structure(api, BUILTIN_ERROR_STRUCTURE).screen == ERROR_SCREEN

    def test_check_reports_all(self, api, tmp_path):
        (tmp_path / "Search.page.xml").write_text('<Screen name="Search"><Bogus/></Screen>')
        (tmp_path / "Results.page.xml").write_text('<Screen name="Search"/>')
        messages = [d.message for d in PageRegistry(api, tmp_path).check()]
        assert any("unknown element" in m for m in messages)
        assert any("root-name mismatch" in m for m in messages)

    def test_path_traversal_names_ignored(self, api, tmp_path):
        with pytest.raises(StructureNotFound):
            PageRegistry(api, tmp_path).resolve("../Search")

    def test_concurrent_renders_identical(self, api, tmp_path):
        (tmp_path / "Search.page.xml").write_bytes((DATA / "Search.page.xml").read_bytes())
        reg = PageRegistry(api, tmp_path)
        s = new_screen(api, "Search").set("Customer.Address.City", "boston")
        pages = []
        threads = [threading.Thread(target=lambda: pages.append(reg.render(s))) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(set(pages)) == 1 and len(pages) == 8


@pytest.mark.parametrize("seed", range(40))
def test_random_structures_render_well_formed(seed):
    rng = random.Random(seed)
    api = random_api(rng)
    st = load_structure(api, random_structure(rng, api))
    s = new_screen(api, "S")
    fill(rng, s.data)
    page = render(st, s)
    checker = check_html(page)
    strict_xml(page)
    for name, _ in checker.inputs:
        assert re.fullmatch(r"[A-Za-z]\w*(\.\w+)*", name)
    assert page == render(st, s)


def test_checker_catches_broken_markup():
    with pytest.raises(MalformedHtml):
        check_html("<!DOCTYPE html>\n<html><body><div></body></html>")
    with pytest.raises(MalformedHtml):
        check_html("<html></html>")


def _walk(node):
    yield node
    for child in node.children:
        yield from _walk(child)
