import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

SESSION_START = time.perf_counter()
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(criterion: int, ok: bool, detail: str):
    ACCEPTANCE.append((criterion, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c, ok, detail in sorted(ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {c}: {'PASS' if ok else 'FAIL'}  {detail}")
    elapsed = time.perf_counter() - SESSION_START
    terminalreporter.write_line(f"suite runtime {elapsed:.1f}s (limit 600s): {'PASS' if elapsed < 600 else 'FAIL'}")
