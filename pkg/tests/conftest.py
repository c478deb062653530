import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Store one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(k: int, ok: bool, detail: str) -> bool:
        CRITERIA[k] = (ok, detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 14):
        if k in CRITERIA:
            ok, detail = CRITERIA[k]
            terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {k:2d}: NOT RUN")
