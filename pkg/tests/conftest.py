import functools

import pytest

from mmwave_coverage import config, montecarlo
from mmwave_coverage.propagation import FadingParams

# criterion lines recorded by test_acceptance.py, echoed in the terminal summary
GATE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if GATE_LINES:
        terminalreporter.section("acceptance gate")
        for line in GATE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def baseline_scenario(nu_los=3, nu_nlos=2, snapshots=100_000, seed=1):
    sc = config.load("baseline-28ghz")
    net = sc.network.with_(fading=FadingParams(nu_los, nu_nlos))
    return net, sc.simulation.with_(network=net, snapshots=snapshots, seed=seed)


@functools.lru_cache(maxsize=None)
def baseline_batch(nu_los=3, nu_nlos=2, snapshots=100_000, seed=1):
    """Shared Monte Carlo run; several tests read different metrics from it."""
    _, sim = baseline_scenario(nu_los, nu_nlos, snapshots, seed)
    return montecarlo.simulate(sim)


@pytest.fixture(scope="session")
def baseline():
    return baseline_scenario()
