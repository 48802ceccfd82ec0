import pytest

CRITERIA: dict[int, str] = {}


@pytest.fixture
def record():
    def _record(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        CRITERIA[number] = line
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
