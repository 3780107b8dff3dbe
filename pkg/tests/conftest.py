import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE = {}


def record(number, title, ok, detail):
    """Store one acceptance line; printed in the terminal summary."""
    ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    print(ACCEPTANCE[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
    missing = [n for n in range(1, 11) if n not in ACCEPTANCE]
    if missing and len(ACCEPTANCE) < 10:
        terminalreporter.write_line(f"not run: {missing}")
