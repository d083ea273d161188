"""Shared test plumbing: collects acceptance verdict lines and prints them
in the terminal summary so they are visible even with output capture on."""

import pytest

_CRITERIA: list = []


@pytest.fixture(scope="session")
def criteria_log():
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
