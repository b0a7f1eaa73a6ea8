"""Shared fixtures, plus the acceptance-criterion verdict summary."""

import pytest

_CRITERION_LINES = []


@pytest.fixture(scope="session")
def criterion():
    """Record one PASS/FAIL verdict line per acceptance criterion.

    The lines are echoed inline (visible with -s and in failure captures)
    and repeated in a terminal section after the run, where capture no
    longer hides them.
    """

    def record(num: int, ok: bool, detail: str) -> None:
        line = f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'} - {detail}"
        _CRITERION_LINES.append((num, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERION_LINES):
            terminalreporter.write_line(line)
