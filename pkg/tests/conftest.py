import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line; it is printed now and repeated in the session summary."""

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERIA):
        terminalreporter.write_line(line)
