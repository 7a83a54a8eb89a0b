import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one acceptance line; all lines are repeated in the terminal summary."""

    def record(number, name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({name}): {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
