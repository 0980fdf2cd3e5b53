import re

import pytest

from cogrelay import SystemConfig, link_budget

_ACCEPT_RE = re.compile(r"test_c(\d+)[a-z]?_")


@pytest.fixture(scope="session")
def defaults():
    return SystemConfig()


@pytest.fixture(scope="session")
def budget(defaults):
    return link_budget(defaults)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One verdict line per acceptance criterion.

    Criteria map to tests in test_acceptance.py named test_c<k>_* or
    test_c<k><letter>_* for split clauses; a criterion passes only if
    every one of its tests passed.
    """
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            m = _ACCEPT_RE.search(nodeid)
            if not m:
                continue
            k = int(m.group(1))
            outcomes.setdefault(k, []).append(status == "passed")
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(outcomes):
        verdict = "PASS" if all(outcomes[k]) else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE C{k}: {verdict}")
