"""Shared test config: hypothesis profile and the acceptance scoreboard."""
from __future__ import annotations

from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

_ACCEPTANCE_FILE = "test_acceptance.py"
# Worse outcomes must win when a test reports several phases.
_PRECEDENCE = {"FAIL": 2, "SKIP": 1, "PASS": 0}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance check at the end of the run."""
    results: dict[str, str] = {}
    for bucket, status in (
        ("failed", "FAIL"),
        ("error", "FAIL"),
        ("skipped", "SKIP"),
        ("passed", "PASS"),
    ):
        for report in terminalreporter.stats.get(bucket, []):
            nodeid = getattr(report, "nodeid", "")
            if _ACCEPTANCE_FILE not in nodeid:
                continue
            name = nodeid.split("::", 1)[-1]
            best = results.get(name)
            if best is None or _PRECEDENCE[status] > _PRECEDENCE[best]:
                results[name] = status
    if not results:
        return
    terminalreporter.section("acceptance checks")
    for name in sorted(results):
        terminalreporter.write_line(f"[acceptance] {results[name]} {name}")
