from __future__ import annotations

import pytest

_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; returns the pass flag for asserting."""

    def record(label: str, passed: bool, detail: str = "") -> bool:
        passed = bool(passed)
        _RESULTS.append((label, passed, detail))
        print(f"ACCEPTANCE {label}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
