import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[c]
        verdict = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        terminalreporter.write_line(f"criterion {c:2d}: {verdict}")
        for ok, detail in checks:
            terminalreporter.write_line(f"    [{'ok' if ok else 'FAIL'}] {detail}")
