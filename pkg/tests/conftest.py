"""Shared pytest plumbing.

The acceptance tests record one human-readable pass/fail line per criterion;
this hook echoes them at the end of the run so the verdicts are visible even
when every test passes (pytest otherwise swallows captured stdout).
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
