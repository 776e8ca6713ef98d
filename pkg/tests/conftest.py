"""Reports one status line per acceptance criterion as its test finishes."""

import pytest

_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion")


def _status(report):
    if report.skipped:
        return "SKIP"
    return "PASS" if report.passed else "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and (report.skipped or report.failed)):
        number, title = marker.args
        line = f"CRITERION {number:>2} {_status(report)}: {title}"
        if report.skipped and isinstance(report.longrepr, tuple):
            line += f" ({report.longrepr[2].removeprefix('Skipped: ')})"
        _LINES.append((number, line))
        reporter = item.config.pluginmanager.get_plugin("terminalreporter")
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
