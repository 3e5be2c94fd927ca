import numpy as np
import pytest

from densdep.dynamics import DynamicsParams, simulate
from densdep.ingest import ObservedSeries

SIM1 = DynamicsParams(1, (0.5, -0.5), 0.05 ** 2)
SIM2 = DynamicsParams(2, (0.5, -0.1, -0.4), 0.05 ** 2)


def sim_series(params=SIM1, horizon=501, obs_sd=0.05, seed=0):
    init = [0.0] * max(params.k, 1)
    traj = simulate(params, init, horizon, obs_sd, seed)
    return ObservedSeries(traj.observed, traj.obs_sd)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def short_sim1():
    return sim_series(horizon=40, seed=3)


# criterion verdicts recorded by test_acceptance, echoed once at the end of the run
GATE = []


def pytest_terminal_summary(terminalreporter):
    if GATE:
        terminalreporter.section("acceptance gate")
        for line in sorted(GATE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
