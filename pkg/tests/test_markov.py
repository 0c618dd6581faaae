import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_stochastic
from sere._random import child
from sere.errors import NotErgodic, NotStochastic, ValidationError
from sere.markov import (
    FiniteMarkovChain,
    chain_step_variance,
    potential_matrix,
    simulate_chain,
    stationary_distribution,
    validate_chain,
)

chains = st.tuples(st.integers(1, 5), st.integers(0, 2**32)).map(
    lambda p: FiniteMarkovChain(random_stochastic(np.random.default_rng(p[1]), p[0]))
)


def test_validate_examples():
    c = validate_chain([[0.5, 0.5], [0.5, 0.5]])
    assert c.ergodic
    c = validate_chain([[1, 0], [0, 1]])
    assert not c.ergodic and not c.irreducible
    with pytest.raises(NotErgodic):
        stationary_distribution(c)
    with pytest.raises(NotStochastic):
        validate_chain([[0.9, 0.2], [0.5, 0.5]])


@pytest.mark.parametrize(
    "P", [[[0.5, 0.5]], [[-0.1, 1.1], [0.5, 0.5]], [[np.nan, 1.0], [0.5, 0.5]], [[1.0 + 1e-11]]]
)
def test_not_stochastic(P):
    with pytest.raises(NotStochastic):
        FiniteMarkovChain(P)


def test_periodic_chain_is_irreducible_not_ergodic(alternating):
    assert alternating.irreducible and not alternating.aperiodic
    assert not alternating.ergodic


def test_three_cycle_period():
    c = FiniteMarkovChain([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    assert c.irreducible and not c.aperiodic
    c = FiniteMarkovChain([[0, 1, 0], [0, 0, 1], [0.5, 0, 0.5]])
    assert c.ergodic


def test_simulate_alternation(alternating):
    np.testing.assert_array_equal(simulate_chain(alternating, 0, 5, 1), [0, 1, 0, 1, 0])


def test_simulate_occupation(sticky):
    x = simulate_chain(sticky, 0, 1_000_000, 2)
    assert abs(np.mean(x == 0) - 5 / 6) <= 0.01 * 5 / 6


def test_simulate_transition_frequencies(sticky):
    x = simulate_chain(sticky, 1, 200_000, 3)
    from_0 = x[1:][x[:-1] == 0]
    assert abs(np.mean(from_0 == 1) - 0.1) < 0.005


@given(chains, st.integers(0, 2**32))
def test_simulate_deterministic(chain, seed):
    a = simulate_chain(chain, 0, 50, seed)
    assert a.tobytes() == simulate_chain(chain, 0, 50, seed).tobytes()
    assert a[0] == 0 and a.size == 50


def test_simulate_bad_state(sticky):
    with pytest.raises(ValidationError):
        simulate_chain(sticky, 2, 5, 0)


def test_stationary_examples(alternating, sticky):
    np.testing.assert_allclose(stationary_distribution(alternating).rho, [0.5, 0.5], atol=1e-14)
    np.testing.assert_allclose(stationary_distribution(sticky).rho, [5 / 6, 1 / 6], atol=1e-14)
    q = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(stationary_distribution(FiniteMarkovChain(np.tile(q, (3, 1)))).rho, q, atol=1e-14)


@given(chains)
def test_stationary_invariants(chain):
    rho = stationary_distribution(chain).rho
    assert np.all(rho >= 0)
    assert abs(rho.sum() - 1) < 1e-10
    assert np.abs(rho @ chain.transition - rho).max() < 1e-10


def test_stationary_matches_empirical():
    chain = FiniteMarkovChain(random_stochastic(np.random.default_rng(4), 4))
    x = simulate_chain(chain, 0, 1_000_000, 5)
    emp = np.bincount(x, minlength=4) / x.size
    rho = stationary_distribution(chain).rho
    assert np.all(np.abs(emp - rho) <= 0.01 * rho)


def test_potential_examples(alternating):
    iid = FiniteMarkovChain([[0.2, 0.8], [0.2, 0.8]])
    np.testing.assert_allclose(potential_matrix(iid).r0, np.eye(2), atol=1e-14)
    np.testing.assert_allclose(potential_matrix(alternating).r0, [[0.75, 0.25], [0.25, 0.75]], atol=1e-14)


@given(chains)
def test_potential_identity(chain):
    n = chain.n_states
    rho = stationary_distribution(chain).rho
    Pi = np.tile(rho, (n, 1))
    R0 = potential_matrix(chain).r0
    target = np.eye(n) - Pi
    assert np.abs(R0 @ (np.eye(n) - chain.transition) - target).max() < 1e-8
    assert np.abs((np.eye(n) - chain.transition) @ R0 - target).max() < 1e-8


def test_step_variance_examples(alternating, iid_chain):
    a = np.array([1.0, -1.0])
    assert chain_step_variance(iid_chain, a) == pytest.approx(1.0)
    q = FiniteMarkovChain([[0.25, 0.75], [0.25, 0.75]])
    b = np.array([3.0, -1.0])  # rho-mean 0
    assert chain_step_variance(q, b) == pytest.approx(0.25 * 9 + 0.75 * 1)
    assert chain_step_variance(alternating, a) == pytest.approx(0.0, abs=1e-15)


@given(chains, st.integers(0, 2**32), st.floats(-100, 100))
def test_step_variance_shift_invariant_and_nonnegative(chain, seed, shift):
    a = np.random.default_rng(seed).normal(size=chain.n_states)
    v = chain_step_variance(chain, a)
    assert v >= 0
    assert chain_step_variance(chain, a + shift) == pytest.approx(v, rel=1e-8, abs=1e-10)


def test_step_variance_matches_mc(sticky):
    # 200 replicas of n = 1e5 steps; each replica is cut into 50 batches of 2000
    # steps (far above the mixing time) so the variance estimate is not dominated
    # by the chi-square noise of 200 samples
    a = np.array([1.0, 0.0])
    abar = a - 5 / 6
    n, n_batches = 100_000, 50
    sums = np.concatenate(
        [abar[simulate_chain(sticky, 0, n, child(6, r))].reshape(n_batches, -1).sum(axis=1) for r in range(200)]
    )
    mc = sums.var(ddof=1) / (n // n_batches)
    oracle = chain_step_variance(sticky, a)
    assert oracle == pytest.approx(5 / 36 * 1.4 / 0.6)
    assert abs(mc - oracle) <= 0.1 * oracle
