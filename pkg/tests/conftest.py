import pytest

_ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(n, title, ok, detail)."""

    def record(n: int, title: str, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[n] = (ok, title, detail)
        print(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, title, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}")
