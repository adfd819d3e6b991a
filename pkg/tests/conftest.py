import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; the terminal summary prints them all."""

    def record(number, name, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
