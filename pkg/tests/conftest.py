import pytest

_VERDICTS: dict[int, tuple[str, str]] = {}


@pytest.fixture
def verdict():
    """Record the outcome of one acceptance criterion for the summary."""

    def record(number: int, passed: bool, detail: str, status: str | None = None) -> None:
        _VERDICTS[number] = (status or ("PASS" if passed else "FAIL"), detail)
        print(f"criterion {number}: {_VERDICTS[number][0]}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        status, detail = _VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {status}: {detail}")
