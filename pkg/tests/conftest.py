import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one result line per acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
