import os
import sys
from contextlib import contextmanager

sys.path.insert(0, os.path.dirname(__file__))

ACCEPTANCE_LINES = {}


@contextmanager
def criterion(number, title):
    """Record one PASS/FAIL line for an acceptance criterion; details go in the yielded dict."""
    detail = {}
    passed = False
    try:
        yield detail
        passed = True
    finally:
        info = ", ".join(f"{k}={v}" for k, v in detail.items())
        line = f"ACCEPTANCE {number} {'PASS' if passed else 'FAIL'}: {title}" + (f" [{info}]" if info else "")
        ACCEPTANCE_LINES[number] = line
        print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
