import pytest

CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def report():
    """``report(k, ok, detail)`` records and prints the outcome of criterion ``k``."""

    def rec(k: int, ok: bool, detail: str) -> bool:
        CRITERIA[k] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail}")
        return bool(ok)

    return rec


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail}")
