import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record a one-line verdict for the acceptance summary."""

    def add(label: str, passed: bool, detail: str = ""):
        _LINES.append(f"{'PASS' if passed else 'FAIL'}  {label:<34} {detail}")
        print(_LINES[-1])

    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
