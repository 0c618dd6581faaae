import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_stochastic
from sere.errors import BalanceViolated, NegativeVariance, ValidationError
from sere.evolution import MatrixFamily
from sere.hawkes import ExpHawkesKernel
from sere.limits import (
    LimitSpec,
    SDECoefficients,
    averaged_evolution,
    averaged_generator,
    averaged_summation_drift,
    averaged_traffic_ode,
    diffusion_generator,
    euler_maruyama,
    euler_maruyama_endpoints,
    summation_sigma2,
    traffic_diffusion_coeffs,
)
from sere.markov import FiniteMarkovChain, potential_matrix, stationary_distribution
from sere.swish import AffineRateFamily

ALT = FiniteMarkovChain([[0.0, 1.0], [1.0, 0.0]])
HALF = FiniteMarkovChain([[0.5, 0.5], [0.5, 0.5]])


def spec_for(chain, lambda_hat=2.0, m=0.5, m2=0.75):
    rho = stationary_distribution(chain)
    return LimitSpec(lambda_hat, m, m2, rho, potential_matrix(chain, rho))


def test_limit_spec_validation():
    for bad in [(0.0, 0.5, 1.0), (1.0, 0.0, 1.0), (1.0, 0.5, 0.2)]:
        with pytest.raises(ValidationError):
            spec_for(HALF, *bad)


def test_limit_spec_from_model():
    spec = LimitSpec.from_model(ExpHawkesKernel(1.0, 0.0, 1.0), HALF, n_events=50_000, seed=1)
    assert spec.lambda_hat == 1.0
    assert spec.m == pytest.approx(1.0, rel=0.03)
    spec = LimitSpec.from_model(ExpHawkesKernel(1.0, 1.0, 2.0), HALF, m=0.5, m2=0.6)
    assert (spec.m, spec.m2) == (0.5, 0.6)


def test_averaged_generator_examples():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(2, 2))
    spec = spec_for(HALF, 2.0, 0.5)
    fam = MatrixFamily([G, G], np.zeros((2, 2, 2)))
    np.testing.assert_allclose(averaged_generator(fam, spec), G, atol=1e-15)
    fam = MatrixFamily([G, -G], np.zeros((2, 2, 2)))
    np.testing.assert_allclose(averaged_generator(fam, spec), 0.0, atol=1e-15)
    gamma = np.array([4.0, 2.0])[:, None, None] * np.eye(2)
    delta = np.array([1.5, 0.5])[:, None, None] * np.eye(2)
    np.testing.assert_allclose(averaged_generator(MatrixFamily(gamma, delta), spec), 5 * np.eye(2), atol=1e-14)


@given(st.integers(0, 2**32))
def test_averaged_generator_linear(seed):
    rng = np.random.default_rng(seed)
    chain = FiniteMarkovChain(random_stochastic(rng, 3))
    spec = spec_for(chain, 1.7, 0.4, 0.5)
    a = MatrixFamily(rng.normal(size=(3, 2, 2)), rng.normal(size=(3, 2, 2)))
    b = MatrixFamily(rng.normal(size=(3, 2, 2)), rng.normal(size=(3, 2, 2)))
    np.testing.assert_allclose(
        averaged_generator(a + b, spec), averaged_generator(a, spec) + averaged_generator(b, spec), atol=1e-12
    )


def test_averaged_evolution_examples():
    f = np.array([1.0, 0.0])
    np.testing.assert_array_equal(averaged_evolution(np.ones((2, 2)), 0.0, f), f)
    np.testing.assert_allclose(averaged_evolution(5 * np.eye(2), 1.0, f), [math.exp(5), 0.0], rtol=1e-14)


@given(st.integers(0, 2**32), st.floats(0, 2), st.floats(0, 2))
def test_averaged_evolution_semigroup(seed, s, t):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(3, 3))
    f = rng.normal(size=3)
    lhs = averaged_evolution(G, s + t, f)
    rhs = averaged_evolution(G, s, averaged_evolution(G, t, f))
    assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(lhs).max())


def test_diffusion_generator_vanishing_sandwich():
    rng = np.random.default_rng(1)
    spec = spec_for(FiniteMarkovChain(random_stochastic(rng, 2)), 2.0, 0.5, 0.75)
    G = rng.normal(size=(2, 2, 2))
    fam = MatrixFamily(G, -spec.m * G)
    rho = spec.rho.rho
    expected = sum(rho[x] * (spec.m2 * G[x] @ G[x] / 2 + spec.m * (-spec.m * G[x]) @ G[x]) for x in range(2))
    np.testing.assert_allclose(diffusion_generator(fam, spec), expected, atol=1e-14)
    # scalar version of the same identity
    g = np.array([1.0, -3.0])
    fam = MatrixFamily(g[:, None, None], -spec.m * g[:, None, None])
    assert diffusion_generator(fam, spec)[0, 0] == pytest.approx(rho @ (spec.m2 * g**2 / 2 - spec.m**2 * g**2))


def test_diffusion_generator_alternating_hand_value():
    spec = spec_for(ALT, 1.0, 1.0, 1.0)
    fam = MatrixFamily(np.array([1.0, -1.0])[:, None, None], np.zeros((2, 1, 1)))
    assert diffusion_generator(fam, spec)[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_diffusion_generator_pointwise_when_iid():
    rng = np.random.default_rng(2)
    spec = spec_for(HALF, 2.0, 0.5, 0.8)
    G = rng.normal(size=(2, 2, 2))
    G[1] = -G[0]
    D2 = rng.normal(size=(2, 2, 2))
    fam = MatrixFamily(G, np.zeros((2, 2, 2)), D2)
    expected = sum(0.5 * (spec.m2 * G[x] @ G[x] / 2 + D2[x]) for x in range(2))
    np.testing.assert_allclose(diffusion_generator(fam, spec), expected, atol=1e-14)


def test_diffusion_generator_balance_violated():
    spec = spec_for(HALF)
    fam = MatrixFamily(np.ones((2, 1, 1)), np.zeros((2, 1, 1)))
    with pytest.raises(BalanceViolated):
        diffusion_generator(fam, spec)


def test_traffic_ode_examples():
    spec = spec_for(HALF, 2.0, 0.5)
    traj = averaged_traffic_ode(AffineRateFamily.constant([0.0, 0.0]), spec, 1.3, 1.0, 0.1)
    np.testing.assert_array_equal(traj.values, 1.3)
    traj = averaged_traffic_ode(AffineRateFamily.constant([3.0, 1.0]), spec, 1.0, 2.0, 0.1)
    np.testing.assert_allclose(traj.values, 1.0 + 2.0 * traj.times, rtol=1e-14)
    traj = averaged_traffic_ode(AffineRateFamily([0.0, 0.0], [-1.0, -1.0]), spec, 2.0, 3.0, 0.01)
    np.testing.assert_allclose(traj.values, 2.0 * np.exp(-traj.times), rtol=1e-13)
    assert traj.times[-1] == 3.0
    with pytest.raises(ValidationError):
        averaged_traffic_ode(AffineRateFamily.constant([0.0, 0.0]), spec, 0.0, 1.0, 0.0)


def test_summation_drift_examples():
    spec = spec_for(HALF, 2.0)
    assert averaged_summation_drift([0.0, 0.0], spec) == 0.0
    assert averaged_summation_drift([2.0, 0.0], spec) == 2.0
    assert averaged_summation_drift([1.0, -1.0], spec) == 0.0


def test_traffic_coeffs_zero():
    spec = spec_for(HALF)
    c = traffic_diffusion_coeffs(AffineRateFamily.constant([0.0, 0.0]), HALF, spec)
    z = np.linspace(-2, 2, 5)
    np.testing.assert_array_equal(c.drift(z), 0.0)
    np.testing.assert_array_equal(c.variance(z), 0.0)


@given(st.integers(0, 2**32), st.floats(-5, 5))
def test_traffic_constant_matches_summation(seed, z):
    rng = np.random.default_rng(seed)
    chain = FiniteMarkovChain(random_stochastic(rng, 3))
    spec = spec_for(chain, 1.5, 0.6, 0.9)
    a = rng.normal(size=3)
    a -= spec.rho.mean(a)
    a[-1] -= spec.rho.mean(a) / spec.rho.rho[-1]
    if abs(spec.rho.mean(a)) >= 1e-10:
        return
    coeffs = traffic_diffusion_coeffs(AffineRateFamily.constant(a), chain, spec)
    assert coeffs.drift(z) == 0.0
    assert coeffs.variance(z) == summation_sigma2(a, chain, spec).formula


def test_traffic_alternating_hand_value():
    spec = spec_for(ALT, 1.0, 1.0, 1.0)
    coeffs = traffic_diffusion_coeffs(AffineRateFamily.constant([1.0, -1.0]), ALT, spec)
    assert coeffs.variance(0.3) == pytest.approx(0.0, abs=1e-15)


def test_traffic_affine_drift():
    # P = Pi: b(z) = lambda_hat * rho[m2 v v' / 2]
    spec = spec_for(HALF, 2.0, 0.5, 0.8)
    v = AffineRateFamily([1.0, -1.0], [0.5, -0.5])
    coeffs = traffic_diffusion_coeffs(v, HALF, spec)
    z = 0.7
    vals = v.c0 + v.c1 * z
    assert coeffs.drift(z) == pytest.approx(2.0 * 0.5 * np.sum(0.8 * vals * v.c1 / 2))
    assert coeffs.variance(z) == pytest.approx(2 * 2.0 * 0.5 * np.sum(0.8 * vals**2 / 2))


@given(st.integers(0, 2**32), st.floats(0.0, 2.0))
def test_traffic_variance_nonnegative(seed, excess):
    # sigma^2(z) = 2 lambda_hat [m^2 sigma_chain^2(v(z, .)) / 2 + (m2 - m^2) rho[v^2] / 2] >= 0
    rng = np.random.default_rng(seed)
    chain = FiniteMarkovChain(random_stochastic(rng, 3))
    m = 0.5
    spec = spec_for(chain, 2.0, m, m * m * (1 + excess))
    rho = spec.rho.rho
    c0, c1 = rng.normal(size=3), rng.normal(size=3)
    c0 -= rho @ c0
    c1 -= rho @ c1
    if abs(rho @ c0) >= 1e-10 or abs(rho @ c1) >= 1e-10:
        return
    coeffs = traffic_diffusion_coeffs(AffineRateFamily(c0, c1), chain, spec)
    assert coeffs.negative_points(np.linspace(-10, 10, 41)).size == 0


def test_negative_variance_is_flagged():
    bad = SDECoefficients(lambda z: 0.0 * z, lambda z: 1.0 - z**2)
    np.testing.assert_array_equal(bad.negative_points([0.0, 0.5, 2.0, -3.0]), [2.0, -3.0])
    with pytest.raises(NegativeVariance):
        euler_maruyama(bad, 2.0, 1.0, 0.1, 0)
    with pytest.raises(NegativeVariance):
        euler_maruyama_endpoints(bad, 2.0, 1.0, 0.1, 10, 0)


def test_balance_threshold_is_exact():
    spec = spec_for(HALF)
    ok = np.array([1.0, -1.0 + 1.9e-10])
    summation_sigma2(ok, HALF, spec)
    bad = np.array([1.0, -1.0 + 2.1e-10])
    with pytest.raises(BalanceViolated):
        summation_sigma2(bad, HALF, spec)
    with pytest.raises(BalanceViolated):
        traffic_diffusion_coeffs(AffineRateFamily.constant(bad), HALF, spec)
    with pytest.raises(BalanceViolated):
        traffic_diffusion_coeffs(AffineRateFamily([1.0, -1.0], [0.0, 1.0]), HALF, spec)


def test_summation_sigma2_examples():
    spec = spec_for(HALF, 2.0, 0.5, 0.8)
    assert summation_sigma2([0.0, 0.0], HALF, spec).formula == 0.0
    sv = summation_sigma2([1.0, -1.0], HALF, spec)
    assert sv.formula == pytest.approx(2.0 * 0.8 * 1.0)
    assert sv.oracle == pytest.approx(2.0)
    spec = spec_for(ALT, 2.0, 0.5, 0.8)
    sv = summation_sigma2([1.0, -1.0], ALT, spec)
    assert sv.formula == pytest.approx(2.0 * (0.8 - 0.25))
    assert sv.oracle == 0.0
    assert math.isnan(sv.ratio)


def test_euler_maruyama_constant_and_decay():
    const = SDECoefficients(lambda z: 0.0 * z, lambda z: 0.0 * z)
    np.testing.assert_array_equal(euler_maruyama(const, 1.5, 1.0, 0.01, 0).values, 1.5)
    decay = SDECoefficients(lambda z: -z, lambda z: 0.0 * z)
    for dt in (1e-2, 1e-3):
        traj = euler_maruyama(decay, 1.0, 1.0, dt, 0)
        assert abs(traj.values[-1] - math.exp(-1)) <= dt


def test_euler_maruyama_wiener_variance():
    w = SDECoefficients(lambda z: 0.0 * z, lambda z: 1.0 + 0.0 * z)
    ends = euler_maruyama_endpoints(w, 0.0, 1.0, 1e-2, 10_000, 3)
    assert abs(ends.var(ddof=1) - 1.0) <= 0.05
    single = euler_maruyama(w, 0.0, 1.0, 1e-2, 4)
    assert single.values.size == 101
    assert euler_maruyama(w, 0.0, 1.0, 1e-2, 4).values.tobytes() == single.values.tobytes()
