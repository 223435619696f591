"""Shared pytest plumbing for the suite.

The acceptance module reports one human-readable line per checked
criterion; those lines are collected here and replayed at the end of the
run so the verdicts survive pytest's own output folding.
"""

import pytest

ACCEPTANCE_LINES = []


def record_line(line: str):
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


@pytest.fixture
def record():
    return record_line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
