"""Terminal-summary plumbing for the secondary acceptance line."""

import pytest

SECONDARY_LINES: list[str] = []


@pytest.fixture
def record_secondary():
    """Recorder collected into the terminal summary, past output capture."""

    def record(name: str, ok: bool, detail: str) -> None:
        SECONDARY_LINES.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    if SECONDARY_LINES:
        terminalreporter.section("secondary acceptance")
        for line in SECONDARY_LINES:
            terminalreporter.write_line(line)
