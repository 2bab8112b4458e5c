"""Shared test infrastructure: the acceptance verdict board.

Acceptance tests append one line per criterion; printing happens in the
terminal summary so the verdicts survive output capture and land in any
teed log of the run.
"""

VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
