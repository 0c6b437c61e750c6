import pytest

_ACCEPTANCE = []


@pytest.fixture
def acceptance_record():
    """Collects one summary line per acceptance criterion."""
    def record(number, name, ok, detail=""):
        _ACCEPTANCE.append((number, name, bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {name}: {detail}")
