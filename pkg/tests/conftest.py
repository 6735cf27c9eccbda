from __future__ import annotations

import pytest

_GATE: list[tuple[str, str, bool, str]] = []


@pytest.fixture
def gate():
    """Record one acceptance line; the terminal summary lists them all."""

    def record(criterion, label, passed, detail=""):
        _GATE.append((criterion, label, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _GATE:
        return
    terminalreporter.section("acceptance gate")
    for criterion, label, passed, detail in _GATE:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {criterion:<5} {label}: {detail}")
