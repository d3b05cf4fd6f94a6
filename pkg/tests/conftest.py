from __future__ import annotations

from pathlib import Path

import pytest

from tiersmith.apidef import load_files

ROOT = Path(__file__).resolve().parent.parent
DATA = Path(__file__).resolve().parent / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"
EXAMPLE_CONFIG = ROOT / "tiersmith.conf"

CRITERIA = {
    1: "golden GetPeople procedure stub",
    2: "golden screen XML nesting",
    3: "common-type table",
    4: "round-trip property suites",
    5: "exception chain fidelity over loopback and HTTP",
    6: "pool leak-freedom under injected faults",
    7: "end-to-end customer search over HTTP",
    8: "rendered input names round-trip through the query parser",
    9: "dispatch fuzz totality",
}


@pytest.fixture(scope="session")
def api():
    """The reference definition set (Person/Address/Customer, ServerX, ScreenX, GetPeople...)."""
    return load_files([DATA / "reference.api.xml"])


@pytest.fixture(scope="session")
def example_api():
    return load_files([ROOT / "example" / "defs"])


# ---------------------------------------------------------------------------
# One PASS/FAIL line per acceptance criterion at the end of the run.

_results: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    number = getattr(report, "criterion", None)
    if number is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _results.setdefault(number, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        outcomes = _results.get(number)
        if not outcomes:
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status} - {title}")
