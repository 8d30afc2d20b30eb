from __future__ import annotations

import pytest

CRITERIA = {
    1: "impurity oracles",
    2: "vote equivalence",
    3: "memorization",
    4: "determinism under parallelism",
    5: "desk-scale reproduction pattern",
    6: "unicornscan phenomenon",
    7: "t-test oracle and baseline table",
    8: "stratification",
    9: "end-to-end CLI",
    10: "feature importances",
}

_outcomes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        ok = call.excinfo is None
        _outcomes.setdefault(n, []).append("PASS" if ok else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        status = "PASS" if all(s == "PASS" for s in _outcomes[n]) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} ({CRITERIA[n]}): {status}")
