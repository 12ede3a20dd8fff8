from functools import lru_cache

import pytest

from xyswap.curve import curve_from_preset
from xyswap.graphsum import tr_via_dual_swap

CRITERIA = {}


@lru_cache(maxsize=None)
def tr_system(name, r, order):
    """Topological-recursion system of a preset, shared across test modules."""
    return tr_via_dual_swap(curve_from_preset(name, r), order)


@pytest.fixture(scope="session")
def systems():
    return tr_system


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    number, title = mark.args
    ok = call.excinfo is None
    prev = CRITERIA.get(number, (title, True))[1]
    CRITERIA[number] = (title, prev and ok)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        title, ok = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
