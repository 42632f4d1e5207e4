"""Shared pytest wiring: the acceptance-criteria scoreboard.

Acceptance tests record one line per criterion through record_criterion();
the summary hook prints the scoreboard at the end of every run so the
PASS/FAIL status of each criterion is visible even without -s.
"""

_CRITERIA = {}


def record_criterion(cid, description, status):
    """status is 'PASS', 'FAIL', or 'SKIP (reason)'."""
    _CRITERIA[cid] = (description, status)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: long-running dataset-scale checks (env-gated)"
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: int(c[1:])):
        description, status = _CRITERIA[cid]
        terminalreporter.write_line(f"[{cid}] {description} ... {status}")
