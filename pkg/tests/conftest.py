import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(k: int, ok: bool, detail: str) -> bool:
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[k] = line
        print(line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])
