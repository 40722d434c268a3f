"""Shared pytest plumbing for the acceptance suite.

The ``criterion`` fixture records one PASS/FAIL summary line per acceptance
criterion; the lines are replayed as a section at the end of the run so the
full verdict is visible regardless of per-test capture.
"""

import pytest

_LINES = {}


@pytest.fixture
def criterion():
    def _record(number, passed, detail):
        status = "PASS" if passed else "FAIL"
        _LINES[number] = f"criterion {number}: {status} — {detail}"
        print(_LINES[number])
        assert passed, _LINES[number]
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_LINES):
        terminalreporter.write_line(_LINES[number])
