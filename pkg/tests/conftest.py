import pytest

_RESULTS: list = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def report(number: int, name: str, passed: bool, detail: str) -> None:
        _RESULTS.append(f"[{'PASS' if passed else 'FAIL'}] {number}. {name}: {detail}")
        print(_RESULTS[-1])

    return report


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
