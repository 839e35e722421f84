import pytest

CRITERIA = range(1, 12)
_results = {}
_ran = []


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for one acceptance criterion."""
    _ran.append(request.node.name)

    def record(number, ok, detail):
        _results[number] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in CRITERIA:
        ok, detail = _results.get(n, (False, "not evaluated"))
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
