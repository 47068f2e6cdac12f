"""Shared pytest hooks: echo acceptance verdict lines after the run."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULT_LINES", None) if mod else None
    if not lines:
        return
    terminalreporter.section("acceptance checks")
    for line in lines:
        terminalreporter.write_line(line)
