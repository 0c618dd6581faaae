import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sere.hawkes import ExpHawkesKernel
from sere.markov import FiniteMarkovChain

settings.register_profile(
    "sere", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("sere")


@pytest.fixture
def canonical_kernel():
    return ExpHawkesKernel(1.0, 1.0, 2.0)


@pytest.fixture
def poisson_kernel():
    return ExpHawkesKernel(1.0, 0.0, 1.0)


@pytest.fixture
def alternating():
    return FiniteMarkovChain([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def sticky():
    return FiniteMarkovChain([[0.9, 0.1], [0.5, 0.5]])


@pytest.fixture
def iid_chain():
    return FiniteMarkovChain([[0.5, 0.5], [0.5, 0.5]])


def random_stochastic(rng, n):
    P = rng.random((n, n)) + 0.05
    return P / P.sum(axis=1, keepdims=True)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
