import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def report(request, capsys):
    """Print one PASS/FAIL line for an acceptance criterion and assert on it."""
    lines = request.config.stash[_LINES]

    def emit(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        with capsys.disabled():
            print(f"\n{line}")
        lines.append(line)
        assert ok, line

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
