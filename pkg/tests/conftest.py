import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class _Studies:
    """Simulation records computed once per session and shared by tests.

    Replications are keyed by (seed, rep, n), so the first 100 replications
    of the 200-replication run are exactly an M = 100 study.
    """

    def __init__(self):
        self._cache = {}

    def records(self, n, tuning, M):
        from srgm.simulation import SimStudyConfig, run_study

        key = (n, tuning)
        have = self._cache.get(key)
        if have is None or have[0] < M:
            cfg = SimStudyConfig(n_grid=[n], M=M, tuning=[tuning], seed=0)
            self._cache[key] = (M, run_study(cfg))
        return [r for r in self._cache[key][1] if r["rep"] < M]

    def config(self, n_grid, tuning, M):
        from srgm.simulation import SimStudyConfig

        return SimStudyConfig(n_grid=list(n_grid), M=M, tuning=[tuning], seed=0)


@pytest.fixture(scope="session")
def studies():
    return _Studies()


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for report in terminalreporter.stats.get(outcome, []):
            if report.when == "call":
                lines.extend(v for k, v in report.user_properties if k == "criterion")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
