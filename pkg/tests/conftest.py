import numpy as np
import pytest

from odit.gem import GemParams, train_baseline
from odit.simlab import Scenario, gen_nominal

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def default_scenario():
    return Scenario(dim=2, sigma=0.1, eps=0.2, change_time=100, horizon=500, seed=0)


@pytest.fixture(scope="session")
def full_model(default_scenario):
    """Baseline at the simulated-experiment scale: N=10000 split 1000/9000, k=s=1, alpha=0.05."""
    train = gen_nominal(10000, default_scenario, np.random.default_rng(2024))
    return train_baseline(train, GemParams(k=1, s=1, alpha=0.05, partition_fraction=0.1, seed=7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
