from collections import OrderedDict

import pytest

# criterion number -> (title, [(test name, outcome)])
_CRITERIA: "OrderedDict[int, tuple[str, list[tuple[str, str]]]]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _CRITERIA.setdefault(number, (title, []))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[mark.args[0]][1].append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, parts = _CRITERIA[number]
        if not parts:
            verdict = "NOT RUN"
        elif all(outcome == "passed" for _, outcome in parts):
            verdict = "PASS"
        else:
            verdict = "FAIL"
        failed = [name for name, outcome in parts if outcome != "passed"]
        detail = f" (failing: {', '.join(failed)})" if failed and verdict == "FAIL" else ""
        tr.write_line(f"criterion {number:2d} {verdict:4s}  {title}{detail}")
