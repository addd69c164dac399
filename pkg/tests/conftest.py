import pytest

ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the assertion is left to the caller."""

    def record(label: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
