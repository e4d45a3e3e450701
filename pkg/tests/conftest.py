import pytest

ACCEPTANCE_LINES = {}


@pytest.fixture
def record_criterion(request):
    """Call with (number, summary); the verdict comes from the test outcome."""
    def record(number, summary):
        ACCEPTANCE_LINES[number] = [summary, request.node.nodeid]
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    for number, entry in ACCEPTANCE_LINES.items():
        if entry[1] == item.nodeid and len(entry) == 2:
            entry.append("PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        summary, _, *verdict = ACCEPTANCE_LINES[number]
        terminalreporter.write_line(f"criterion {number:>2}: {(verdict or ['FAIL'])[0]}  {summary}")
