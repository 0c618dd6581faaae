"""Exponential-kernel Hawkes processes: validation, exact simulation, moments.

The intensity is ``lambda(t) = lambda_base + alpha * sum_{tau_k < t} exp(-beta (t - tau_k))``.
Simulation is Ogata thinning where the bound is the current intensity, which is
valid because the intensity only decays between events.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from ._random import SeedLike, generator
from .errors import InsufficientSamples, NonPositiveParameter, StabilityViolation, ValidationError

__all__ = [
    "ExpHawkesKernel",
    "EventSequence",
    "MomentEstimate",
    "validate_kernel",
    "intensity_at",
    "simulate_hawkes",
    "simulate_hawkes_events",
    "estimate_interarrival_moments",
]


@dataclass(frozen=True)
class ExpHawkesKernel:
    """Baseline rate, excitation jump and decay rate of a univariate Hawkes process."""

    lambda_base: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("lambda_base", "alpha", "beta"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise NonPositiveParameter(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, float(value))
        if self.lambda_base <= 0:
            raise NonPositiveParameter(f"lambda_base must be > 0, got {self.lambda_base}")
        if self.beta <= 0:
            raise NonPositiveParameter(f"beta must be > 0, got {self.beta}")
        if self.alpha < 0:
            raise NonPositiveParameter(f"alpha must be >= 0, got {self.alpha}")
        if self.alpha / self.beta >= 1:
            raise StabilityViolation(
                f"branching ratio alpha/beta = {self.alpha / self.beta:g} must be < 1"
            )

    @property
    def mu_hat(self) -> float:
        """Branching ratio, the integral of the excitation kernel."""
        return self.alpha / self.beta

    @property
    def lambda_hat(self) -> float:
        """Long-run event rate."""
        return self.lambda_base / (1.0 - self.mu_hat)

    def expected_count(self, horizon: float) -> float:
        """E[N(horizon)] starting from an empty history (exact)."""
        k = self.beta - self.alpha
        lam_hat = self.lambda_hat
        return lam_hat * horizon - (lam_hat - self.lambda_base) * (-math.expm1(-k * horizon)) / k


def validate_kernel(lambda_base: float, alpha: float, beta: float) -> ExpHawkesKernel:
    return ExpHawkesKernel(lambda_base, alpha, beta)


@dataclass(frozen=True)
class EventSequence:
    """Strictly increasing event times in ``(0, horizon]``."""

    horizon: float
    times: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", float(self.horizon))
        if times.ndim != 1:
            raise ValidationError("event times must be one-dimensional")
        if times.size:
            if times[0] <= 0 or times[-1] > self.horizon:
                raise ValidationError("event times must lie in (0, horizon]")
            if np.any(np.diff(times) <= 0):
                raise ValidationError("event times must be strictly increasing")

    def __len__(self):
        return self.times.size

    def count(self, t: float) -> int:
        """N(t): number of events in (0, t]."""
        return int(np.searchsorted(self.times, t, side="right"))

    def interarrivals(self) -> np.ndarray:
        return np.diff(self.times, prepend=0.0)


@dataclass(frozen=True)
class MomentEstimate:
    m: float
    m2: float
    n_samples: int
    std_err_m: float


def intensity_at(kernel: ExpHawkesKernel, events: EventSequence, t: float) -> float:
    """Left-continuous intensity: an event exactly at ``t`` is not counted."""
    if t < 0:
        raise ValidationError("t must be >= 0")
    times = events.times
    past = times[: np.searchsorted(times, t, side="left")]
    if past.size == 0:
        return kernel.lambda_base
    return kernel.lambda_base + kernel.alpha * float(np.exp(-kernel.beta * (t - past)).sum())


@numba.njit(cache=True)
def _thin_block(lam0, alpha, beta, horizon, max_events, t, excess, u, out):
    # Consumes uniforms in pairs (waiting time, acceptance). ``excess`` is
    # lambda(t+) - lam0. Returns the updated state, number accepted, and a done flag.
    n = 0
    i = 0
    while i + 1 < u.shape[0]:
        bound = lam0 + excess
        w = -math.log1p(-u[i]) / bound
        t_cand = t + w
        if t_cand > horizon:
            return t_cand, excess, n, True
        excess *= math.exp(-beta * w)
        t = t_cand
        if u[i + 1] * bound <= lam0 + excess:
            out[n] = t
            n += 1
            excess += alpha
            if n >= max_events:
                return t, excess, n, True
        i += 2
    return t, excess, n, False


def _thin(kernel: ExpHawkesKernel, horizon: float, max_events: int, seed: SeedLike) -> np.ndarray:
    rng = generator(seed)
    expected = kernel.lambda_hat * horizon if math.isfinite(horizon) else float(max_events)
    expected = min(expected, float(max_events))
    # block size only affects how many uniforms are drawn per refill, never the result
    block = 2 * int(min(max(1.25 * expected + 64, 256), 1 << 20))
    t, excess = 0.0, 0.0
    remaining = max_events
    chunks = []
    while True:
        u = rng.random(block)
        out = np.empty(block // 2)
        t, excess, n, done = _thin_block(
            kernel.lambda_base, kernel.alpha, kernel.beta, horizon, remaining, t, excess, u, out
        )
        chunks.append(out[:n])
        remaining -= n
        if done:
            break
    return np.concatenate(chunks) if len(chunks) > 1 else chunks[0].copy()


def simulate_hawkes(kernel: ExpHawkesKernel, horizon: float, seed: SeedLike) -> EventSequence:
    """Exact simulation on ``(0, horizon]``; deterministic given ``seed``."""
    if not horizon > 0:
        raise ValidationError(f"horizon must be > 0, got {horizon}")
    times = _thin(kernel, float(horizon), np.iinfo(np.int64).max, seed)
    return EventSequence(horizon, times)


def simulate_hawkes_events(kernel: ExpHawkesKernel, n_events: int, seed: SeedLike) -> np.ndarray:
    """First ``n_events`` event times (no horizon)."""
    if n_events < 1:
        raise ValidationError("n_events must be >= 1")
    return _thin(kernel, math.inf, int(n_events), seed)


def estimate_interarrival_moments(
    kernel: ExpHawkesKernel,
    n_events: int,
    burn_in: int | None = None,
    seed: SeedLike = 0,
    n_batches: int = 50,
) -> MomentEstimate:
    """Sample mean and second moment of inter-arrival times after a burn-in.

    Inter-arrivals of a Hawkes process are dependent, so ``std_err_m`` is a
    batch-means estimate rather than ``sd / sqrt(n)``.  ``burn_in`` defaults to
    10% of ``n_events``.
    """
    if burn_in is None:
        burn_in = n_events // 10
    if not (0 <= burn_in < n_events):
        raise ValidationError("need n_events > burn_in >= 0")
    if n_events - burn_in < 100:
        raise InsufficientSamples(
            f"only {n_events - burn_in} inter-arrivals after burn-in; need at least 100"
        )
    times = simulate_hawkes_events(kernel, n_events, seed)
    theta = np.diff(times, prepend=0.0)[burn_in:]
    m = float(theta.mean())
    m2 = float(np.mean(theta**2))
    n_batches = max(2, min(n_batches, theta.size // 10))
    usable = theta.size - theta.size % n_batches
    batch_means = theta[:usable].reshape(n_batches, -1).mean(axis=1)
    se = float(batch_means.std(ddof=1) / math.sqrt(n_batches))
    return MomentEstimate(m=m, m2=m2, n_samples=int(theta.size), std_err_m=se)
