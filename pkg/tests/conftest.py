import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # gradcheck helpers

_criteria: list[str] = []


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line; returns ``ok`` so the test can assert on it."""

    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title}" + (f"  [{detail}]" if detail else "")
        _criteria.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criteria, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
