import numpy as np
import pytest

from rebalance.core import SeedSpec
from rebalance.density import BetaTarget
from rebalance.experiment import ExperimentSpec, draw_samples, synthesize_population


def illustration_samples(seed: int, n: int = 1000, n_population: int = 10000):
    spec = ExperimentSpec(n=n, n_population=n_population)
    s = SeedSpec(seed)
    population = synthesize_population(spec, s.child(0))
    return draw_samples(spec, population, s)


@pytest.fixture(scope="session")
def samples0():
    return illustration_samples(0)


@pytest.fixture(scope="session")
def beta55():
    return BetaTarget(5, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
