"""Shared test plumbing: the acceptance tests register one summary line each,
printed at the end of the run."""

ACCEPTANCE_LINES = []


def record_acceptance(number: int, ok: bool, detail: str):
    ACCEPTANCE_LINES.append(
        (number, f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
