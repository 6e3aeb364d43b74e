import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def criterion(request):
    """Record one verdict line per acceptance criterion, then assert it."""
    lines = request.config.stash[_LINES]

    def verdict(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        lines.append(line)
        print(line)
        assert ok, line

    def skip(number, title, reason):
        line = f"criterion {number:>2} SKIP  {title}  ({reason})"
        lines.append(line)
        print(line)
        pytest.skip(reason)

    verdict.skip = skip
    return verdict


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

