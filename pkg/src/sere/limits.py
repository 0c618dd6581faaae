"""Closed-form limit objects for averaging and diffusion approximation.

The potential matrix ``R0`` acts on functions of the state, so every
``(R0 - I)`` sandwich below mixes states:
``a(x) * sum_y (R0 - I)(x, y) a(y)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._random import SeedLike, generator
from .errors import BalanceViolated, NegativeVariance, ValidationError
from .evolution import MatrixFamily, balance_residual, matrix_exponential
from .hawkes import ExpHawkesKernel, estimate_interarrival_moments
from .markov import (
    FiniteMarkovChain,
    PotentialMatrix,
    StationaryDistribution,
    chain_step_variance,
    potential_matrix,
    stationary_distribution,
)
from .swish import AffineRateFamily, Trajectory

__all__ = [
    "LimitSpec",
    "SDECoefficients",
    "SummationVariance",
    "averaged_generator",
    "averaged_evolution",
    "diffusion_generator",
    "averaged_traffic_ode",
    "averaged_summation_drift",
    "traffic_diffusion_coeffs",
    "summation_sigma2",
    "euler_maruyama",
    "euler_maruyama_endpoints",
    "BALANCE_TOL",
    "GENERATOR_BALANCE_TOL",
]

BALANCE_TOL = 1e-10
GENERATOR_BALANCE_TOL = 1e-8
# sigma^2 values in (-VARIANCE_ZERO_TOL, 0) are rounding noise around an exact zero
VARIANCE_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class LimitSpec:
    lambda_hat: float
    m: float
    m2: float
    rho: StationaryDistribution
    r0: PotentialMatrix

    def __post_init__(self):
        if not self.lambda_hat > 0:
            raise ValidationError("lambda_hat must be > 0")
        if not self.m > 0:
            raise ValidationError("m must be > 0")
        if self.m2 < self.m**2:
            raise ValidationError(f"m2={self.m2} < m^2={self.m ** 2}")

    @classmethod
    def from_model(
        cls,
        kernel: ExpHawkesKernel,
        chain: FiniteMarkovChain,
        m: Optional[float] = None,
        m2: Optional[float] = None,
        n_events: int = 200_000,
        seed: SeedLike = 0,
    ) -> "LimitSpec":
        """Build from a kernel and chain; ``m``, ``m2`` are estimated unless given."""
        if m is None or m2 is None:
            est = estimate_interarrival_moments(kernel, n_events, seed=seed)
            m = est.m if m is None else m
            m2 = est.m2 if m2 is None else m2
        rho = stationary_distribution(chain)
        return cls(kernel.lambda_hat, float(m), float(m2), rho, potential_matrix(chain, rho))

    @property
    def n_states(self) -> int:
        return self.rho.rho.size

    @property
    def r0_minus_i(self) -> np.ndarray:
        return self.r0.r0 - np.eye(self.n_states)


@dataclass(frozen=True)
class SDECoefficients:
    drift: Callable
    variance: Callable

    def negative_points(self, zs) -> np.ndarray:
        """Sample points where the variance is negative (beyond rounding)."""
        zs = np.atleast_1d(np.asarray(zs, dtype=float))
        return zs[np.asarray(self.variance(zs)) < -VARIANCE_ZERO_TOL]


@dataclass(frozen=True)
class SummationVariance:
    formula: float
    oracle: float

    @property
    def ratio(self) -> float:
        """formula / oracle (nan when the oracle vanishes)."""
        return self.formula / self.oracle if self.oracle != 0 else math.nan


def averaged_generator(family: MatrixFamily, spec: LimitSpec) -> np.ndarray:
    """``lambda_hat (m sum rho G + sum rho D1)``."""
    rho = spec.rho.rho
    gamma_hat = spec.m * np.tensordot(rho, family.gamma, axes=1)
    d_hat = np.tensordot(rho, family.d1, axes=1)
    return spec.lambda_hat * (gamma_hat + d_hat)


def averaged_evolution(G_hat, t: float, f) -> np.ndarray:
    return matrix_exponential(G_hat, t) @ np.asarray(f, dtype=float)


def diffusion_generator(family: MatrixFamily, spec: LimitSpec) -> np.ndarray:
    """rho-average of ``A(x) sum_y (R0-I)(x,y) A(y) + m2 G^2/2 + m D1 G + D2`` with ``A = mG + D1``."""
    resid = balance_residual(family, spec.rho, spec.m)
    if resid >= GENERATOR_BALANCE_TOL:
        raise BalanceViolated(f"sum rho (m G + D1) has max-norm {resid:.3g}")
    rho = spec.rho.rho
    A = spec.m * family.gamma + family.d1
    mixed = np.tensordot(spec.r0_minus_i, A, axes=1)  # mixed[x] = sum_y (R0-I)(x,y) A(y)
    L = np.zeros((family.dim, family.dim))
    for x in range(family.n_states):
        G = family.gamma[x]
        L += rho[x] * (A[x] @ mixed[x] + spec.m2 * (G @ G) / 2 + spec.m * family.d1[x] @ G + family.d2[x])
    return L


def averaged_summation_drift(a, spec: LimitSpec) -> float:
    return spec.lambda_hat * spec.rho.mean(a)


def averaged_traffic_ode(v: AffineRateFamily, spec: LimitSpec, z0: float, t: float, dt: float) -> Trajectory:
    """Solve ``dz/dt = lambda_hat m sum rho v(z, .)`` on a ``dt`` grid.

    For an affine family the averaged field is ``b0 + b1 z`` and the exact solution
    is used.
    """
    if not dt > 0:
        raise ValidationError("dt must be > 0")
    scale = spec.lambda_hat * spec.m
    b0 = scale * spec.rho.mean(v.c0)
    b1 = scale * spec.rho.mean(v.c1)
    n = int(math.ceil(t / dt - 1e-9))
    times = np.linspace(0.0, t, n + 1)
    k = b1 * times
    phi = np.where(np.abs(k) < 1e-10, 1.0 + 0.5 * k, np.expm1(k) / np.where(k == 0, 1.0, k))
    values = z0 * np.exp(k) + b0 * times * phi
    return Trajectory(times, values)


def _check_balance(values, spec: LimitSpec, what: str):
    avg = spec.rho.mean(values)
    if abs(avg) >= BALANCE_TOL:
        raise BalanceViolated(f"rho-average of {what} is {avg:.3g}, must vanish")


def _sandwich(spec: LimitSpec, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """``sum_x rho(x) left[x] * sum_y (R0-I)(x,y) right[y]`` for arrays shaped (n_states, k).

    Written as explicit loops so the arithmetic per column does not depend on k.
    """
    rho = spec.rho.rho
    K = spec.r0_minus_i
    n = spec.n_states
    total = np.zeros(left.shape[1:])
    for x in range(n):
        mixed = np.zeros(left.shape[1:])
        for y in range(n):
            mixed = mixed + K[x, y] * right[y]
        total = total + rho[x] * (left[x] * mixed)
    return total


def _weighted(spec: LimitSpec, values: np.ndarray) -> np.ndarray:
    rho = spec.rho.rho
    total = np.zeros(values.shape[1:])
    for x in range(spec.n_states):
        total = total + rho[x] * values[x]
    return total


def _traffic_sigma2(spec: LimitSpec, V: np.ndarray) -> np.ndarray:
    return 2.0 * spec.lambda_hat * (spec.m**2 * _sandwich(spec, V, V) + _weighted(spec, spec.m2 * V * V / 2.0))


def traffic_diffusion_coeffs(v: AffineRateFamily, chain: FiniteMarkovChain, spec: LimitSpec) -> SDECoefficients:
    """Drift ``b(z)`` and variance ``sigma^2(z)`` of the diffusion limit of the traffic process."""
    if v.n_states != chain.n_states or spec.n_states != chain.n_states:
        raise ValidationError("rate family, chain and spec must share the state space")
    _check_balance(v.c0, spec, "c0")
    _check_balance(v.c1, spec, "c1")
    c0 = v.c0[:, None]
    c1 = v.c1[:, None]

    def _values(z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return c0 + c1 * z[None, :], c1 + 0.0 * z[None, :], z

    def drift(z):
        V, dV, zz = _values(z)
        out = spec.lambda_hat * (spec.m**2 * _sandwich(spec, V, dV) + _weighted(spec, spec.m2 * V * dV / 2.0))
        return out if np.ndim(z) else float(out[0])

    def variance(z):
        V, _, zz = _values(z)
        out = _traffic_sigma2(spec, V)
        return out if np.ndim(z) else float(out[0])

    coeffs = SDECoefficients(drift, variance)
    probe = np.linspace(-10.0, 10.0, 41)
    if coeffs.negative_points(probe).size:
        warnings.warn("sigma^2(z) < 0 at some sample points; reported, not clamped", RuntimeWarning, stacklevel=2)
    return coeffs


def summation_sigma2(a, chain: FiniteMarkovChain, spec: LimitSpec) -> SummationVariance:
    """Formula variance of the summation diffusion limit together with the chain-CLT oracle.

    ``formula = 2 lambda_hat rho[m^2 a (R0-I) a + m2 a^2 / 2]``;
    ``oracle = lambda_hat * chain_step_variance(chain, a)``.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (chain.n_states,):
        raise ValidationError("need one mark per state")
    _check_balance(a, spec, "a")
    formula = float(_traffic_sigma2(spec, a[:, None])[0])
    oracle = spec.lambda_hat * chain_step_variance(chain, a)
    return SummationVariance(formula, oracle)


def _em_step_variance(coeffs: SDECoefficients, z: np.ndarray) -> np.ndarray:
    s2 = np.asarray(coeffs.variance(z), dtype=float)
    if np.any(s2 < -VARIANCE_ZERO_TOL):
        raise NegativeVariance(f"sigma^2 = {s2.min():.3g} < 0 encountered")
    return np.maximum(s2, 0.0)


def euler_maruyama_endpoints(
    coeffs: SDECoefficients, z0: float, t: float, dt: float, n_paths: int, seed: SeedLike
) -> np.ndarray:
    """Endpoints of ``n_paths`` independent Euler-Maruyama paths, stepped together."""
    if not dt > 0:
        raise ValidationError("dt must be > 0")
    n = int(math.ceil(t / dt - 1e-9))
    h = t / n
    rng = generator(seed)
    z = np.full(n_paths, float(z0))
    for _ in range(n):
        s2 = _em_step_variance(coeffs, z)
        z = z + np.asarray(coeffs.drift(z)) * h + np.sqrt(s2 * h) * rng.standard_normal(n_paths)
    return z


def euler_maruyama(coeffs: SDECoefficients, z0: float, t: float, dt: float, seed: SeedLike) -> Trajectory:
    """Single Euler-Maruyama path of ``dz = b(z) dt + sigma(z) dw``."""
    if not dt > 0:
        raise ValidationError("dt must be > 0")
    n = int(math.ceil(t / dt - 1e-9))
    h = t / n
    noise = generator(seed).standard_normal(n)
    values = np.empty(n + 1)
    values[0] = z = float(z0)
    for i in range(n):
        s2 = float(_em_step_variance(coeffs, np.array([z]))[0])
        z = z + float(np.asarray(coeffs.drift(np.array([z])))[0]) * h + math.sqrt(s2 * h) * noise[i]
        values[i + 1] = z
    return Trajectory(np.linspace(0.0, t, n + 1), values)
