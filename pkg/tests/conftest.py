"""Shared fixtures and the acceptance summary printed after the run."""

import re
from collections import OrderedDict

import pytest

from mixent.numerics import QuadratureSpec

_ACCEPTANCE = OrderedDict()


@pytest.fixture
def tight():
    return QuadratureSpec(abs_tol=1e-12, rel_tol=1e-12)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "failed": [], "passed": []})
    (entry["passed"] if report.passed else entry["failed"]).append(report.nodeid.split("::")[-1])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE, key=_natural):
        entry = _ACCEPTANCE[number]
        status = "FAIL" if entry["failed"] else "PASS"
        line = f"criterion {number:>3}: {status}  {entry['title']}"
        if entry["failed"]:
            line += f"  (failing: {', '.join(entry['failed'])})"
        terminalreporter.write_line(line)


def _natural(label):
    digits, rest = re.match(r"(\d*)(.*)", str(label)).groups()
    return int(digits or 0), rest
