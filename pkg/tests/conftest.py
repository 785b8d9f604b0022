"""Shared pytest wiring: per-criterion pass/fail lines for the acceptance
suite, printed in the terminal summary."""

import pytest

_RESULTS: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(name): an acceptance criterion this test implements")


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    marker_name = getattr(report, "_criterion", None)
    if marker_name:
        _RESULTS[marker_name] = "PASS" if report.passed else "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker:
        report._criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, verdict in _RESULTS.items():
        terminalreporter.write_line(f"  [{verdict}] {name}")
