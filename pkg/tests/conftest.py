"""Shared test plumbing: per-criterion pass/fail summary for the acceptance suite.

Acceptance tests carry ``@pytest.mark.criterion(number, title)``; a criterion
passes only if every test bearing its number passes. One line per criterion
is printed at the end of the session.
"""

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when != "call" and not report.failed:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "passed": 0, "failed": [], "seen": set()})
    if report.failed:
        entry["failed"].append(item.name)
    elif report.when == "call" and item.nodeid not in entry["seen"]:
        entry["passed"] += 1
    entry["seen"].add(item.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        e = _RESULTS[number]
        verdict = "FAIL" if e["failed"] else "PASS"
        total = e["passed"] + len(e["failed"])
        line = f"criterion {number:2d} {verdict}: {e['title']} ({e['passed']}/{total} checks)"
        if e["failed"]:
            line += " failing: " + ", ".join(e["failed"])
        tr.write_line(line)
