"""SwishP ``x(t) = x_{N(t)}`` and the concrete processes built on it.

A :class:`SwishPath` pairs Hawkes event times with the chain states read at the
event counts.  The trajectory builders below turn a path into the impulse
traffic, compound (summation), risk, geometric compound and switched diffusion
processes.  All paths are cadlag: the value at an event time is post-jump.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numba
import numpy as np

from ._random import CHAIN_STREAM, EVENTS_STREAM, SeedLike, child, generator
from .errors import InvalidMark, NonPositiveParameter, OutOfHorizon, ValidationError
from .hawkes import EventSequence, ExpHawkesKernel, simulate_hawkes
from .markov import FiniteMarkovChain, simulate_chain

__all__ = [
    "SwishPath",
    "AffineRateFamily",
    "Trajectory",
    "RuinEstimate",
    "simulate_swish",
    "state_at",
    "compound_path",
    "impulse_traffic_path",
    "impulse_traffic_at",
    "risk_path",
    "ruin_margin",
    "ruin_probability_mc",
    "geometric_compound_path",
    "switched_diffusion_path",
]


@dataclass(frozen=True)
class SwishPath:
    events: EventSequence
    states: np.ndarray = field(repr=False)

    def __post_init__(self):
        states = np.array(self.states, dtype=np.int64)
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        if states.shape != (len(self.events) + 1,):
            raise ValidationError(
                f"need {len(self.events) + 1} states for {len(self.events)} events, got {states.shape}"
            )

    @property
    def horizon(self) -> float:
        return self.events.horizon

    @property
    def times(self) -> np.ndarray:
        return self.events.times

    @property
    def n_events(self) -> int:
        return len(self.events)

    def state_at(self, t: float) -> int:
        return state_at(self, t)

    def occupation_fractions(self, n_states: int) -> np.ndarray:
        """Fraction of ``[0, horizon]`` spent in each state."""
        edges = np.concatenate(([0.0], self.times, [self.horizon]))
        return np.bincount(self.states, weights=np.diff(edges), minlength=n_states) / self.horizon


@dataclass(frozen=True)
class AffineRateFamily:
    """Per-state velocity ``v(z, x) = c0[x] + c1[x] * z``."""

    c0: np.ndarray
    c1: np.ndarray

    def __post_init__(self):
        c0 = np.atleast_1d(np.array(self.c0, dtype=float))
        c1 = np.atleast_1d(np.array(self.c1, dtype=float))
        if c1.shape != c0.shape or c0.ndim != 1:
            raise ValidationError("c0 and c1 must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(c0)) and np.all(np.isfinite(c1))):
            raise ValidationError("rate family entries must be finite")
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c1", c1)

    @classmethod
    def constant(cls, values) -> "AffineRateFamily":
        values = np.asarray(values, dtype=float)
        return cls(values, np.zeros_like(values))

    @property
    def n_states(self) -> int:
        return self.c0.size

    def __call__(self, z, x):
        return self.c0[x] + self.c1[x] * z

    def derivative(self, z, x):
        return self.c1[x] + 0.0 * z

    def scaled(self, factor: float) -> "AffineRateFamily":
        return AffineRateFamily(self.c0 * factor, self.c1 * factor)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    states: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValidationError("times and values must have equal length")

    def value_at(self, t: float) -> float:
        """Value at the last grid point ``<= t`` (exact for piecewise-constant paths)."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.values[max(i, 0)])


@dataclass(frozen=True)
class RuinEstimate:
    probability: float
    std_err: float
    n_replicas: int


def simulate_swish(
    kernel: ExpHawkesKernel, chain: FiniteMarkovChain, x0: int, horizon: float, seed: SeedLike
) -> SwishPath:
    """Hawkes events and chain states from independent sub-streams of ``seed``."""
    events = simulate_hawkes(kernel, horizon, child(seed, EVENTS_STREAM))
    states = simulate_chain(chain, x0, len(events) + 1, child(seed, CHAIN_STREAM))
    return SwishPath(events, states)


def state_at(path: SwishPath, t: float) -> int:
    if not (0 <= t <= path.horizon):
        raise OutOfHorizon(f"t={t} outside [0, {path.horizon}]")
    return int(path.states[path.events.count(t)])


def _marks(values, n_states: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 1:
        arr = np.full(n_states, float(arr[0]))
    if arr.shape != (n_states,):
        raise ValidationError(f"{name}: need one value per state ({n_states}), got shape {arr.shape}")
    return arr


def _n_states(path: SwishPath, *arrays) -> int:
    sizes = [np.atleast_1d(np.asarray(a)).size for a in arrays]
    return max([int(path.states.max()) + 1] + sizes)


def _jump_grid(path: SwishPath):
    """Grid ``0, tau_1, ..., tau_N[, horizon]`` and the event count at each point."""
    times = path.times
    counts = np.arange(times.size + 1)
    grid = np.concatenate(([0.0], times))
    if times.size == 0 or times[-1] < path.horizon:
        grid = np.append(grid, path.horizon)
        counts = np.append(counts, times.size)
    return grid, counts


def compound_path(path: SwishPath, a, z0: float = 0.0, include_initial_mark: bool = False) -> Trajectory:
    """``z(t) = z0 + sum_{k=1}^{N(t)} a(x_k)`` (from ``k=0`` if ``include_initial_mark``)."""
    a = _marks(a, _n_states(path, a), "a")
    grid, counts = _jump_grid(path)
    jumps = a[path.states]
    if not include_initial_mark:
        jumps = jumps.copy()
        jumps[0] = 0.0
    sums = np.cumsum(jumps)
    return Trajectory(grid, z0 + sums[counts], path.states[counts])


@numba.njit(cache=True)
def _phi(x):
    # expm1(x) / x, continuous at 0
    if abs(x) < 1e-10:
        return 1.0 + 0.5 * x
    return math.expm1(x) / x


@numba.njit(cache=True)
def _affine_flow_path(grid, seg_state, jump, c0, c1, z0):
    out = np.empty(grid.shape[0])
    z = z0 + jump[0]
    out[0] = z
    for i in range(1, grid.shape[0]):
        h = grid[i] - grid[i - 1]
        x = seg_state[i - 1]
        k = c1[x] * h
        z = z * math.exp(k) + c0[x] * h * _phi(k)
        z += jump[i]
        out[i] = z
    return out


def _refined_grid(path: SwishPath, dt: float):
    """Regular ``dt`` grid merged with the event times and the horizon."""
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    n = int(math.floor(path.horizon / dt))
    regular = np.arange(n + 1) * dt
    grid = np.union1d(np.union1d(regular[regular < path.horizon], path.times), [path.horizon])
    counts = np.searchsorted(path.times, grid, side="right")
    is_event = np.zeros(grid.size, dtype=bool)
    idx = np.searchsorted(grid, path.times)
    is_event[idx] = True
    return grid, counts, is_event


def impulse_traffic_path(
    path: SwishPath,
    v: AffineRateFamily,
    a=0.0,
    z0: float = 0.0,
    dt: float = 0.01,
    include_initial_mark: bool = False,
) -> Trajectory:
    """``z(t) = z0 + int_0^t v(z(s), x(s)) ds + sum_{k<=N(t)} a(x_k)``.

    The flow between grid points is the exact solution of the affine ODE, so
    ``dt`` only controls the output resolution.
    """
    n_states = _n_states(path, v.c0, a)
    a = _marks(a, n_states, "a")
    c0 = _marks(v.c0, n_states, "v.c0")
    c1 = _marks(v.c1, n_states, "v.c1")
    grid, counts, is_event = _refined_grid(path, dt)
    states = path.states[counts]
    jump = np.where(is_event, a[states], 0.0)
    if include_initial_mark:
        jump[0] += a[path.states[0]]
    values = _affine_flow_path(grid, states, jump, c0, c1, float(z0))
    return Trajectory(grid, values, states)


def impulse_traffic_at(path: SwishPath, v: AffineRateFamily, a, z0: float, times) -> np.ndarray:
    """Exact impulse traffic values at arbitrary ``times`` in ``[0, horizon]``."""
    n_states = _n_states(path, v.c0, a)
    a = _marks(a, n_states, "a")
    times = np.asarray(times, dtype=float)
    if times.size and (times.min() < 0 or times.max() > path.horizon):
        raise OutOfHorizon("sample times must lie in [0, horizon]")
    grid = np.union1d(np.union1d([0.0], times), path.times)
    counts = np.searchsorted(path.times, grid, side="right")
    states = path.states[counts]
    jump = np.zeros(grid.size)
    jump[np.searchsorted(grid, path.times)] = a[path.states[1:]]
    values = _affine_flow_path(
        grid, states, jump, _marks(v.c0, n_states, "v.c0"), _marks(v.c1, n_states, "v.c1"), float(z0)
    )
    return values[np.searchsorted(grid, times)]


def risk_path(path: SwishPath, u: float, c: float, a) -> Trajectory:
    """``R(t) = u + c t - sum_{k=1}^{N(t)} a(x_k)`` on the jump grid."""
    traj = compound_path(path, a, 0.0)
    return Trajectory(traj.times, u + c * traj.times - traj.values, traj.states)


def ruin_margin(path: SwishPath, c: float, a) -> float:
    """``inf_{t <= horizon} (c t - S(t))``; ruin occurs iff ``u + margin < 0``.

    Between events the path is linear, so checking 0, the horizon and both
    one-sided limits at every event time is exact.
    """
    a = _marks(a, _n_states(path, a), "a")
    times = path.times
    claims = np.cumsum(a[path.states[1:]])
    post = c * times - claims
    pre = c * times - np.concatenate(([0.0], claims[:-1]))
    end = c * path.horizon - (claims[-1] if claims.size else 0.0)
    candidates = [0.0, end]
    if times.size:
        candidates += [float(post.min()), float(pre.min())]
    return min(candidates)


def ruin_probability_mc(
    kernel: ExpHawkesKernel,
    chain: FiniteMarkovChain,
    u: Union[float, Sequence[float]],
    c: float,
    a,
    horizon: float,
    n_replicas: int,
    seed: SeedLike,
    x0: int = 0,
):
    """Fraction of replicas whose risk process goes below zero before ``horizon``.

    ``u`` may be a sequence, in which case the same replicas are reused for each
    capital level and a list of estimates is returned.
    """
    if n_replicas < 100:
        raise ValidationError("n_replicas must be >= 100")
    a_arr = _marks(a, chain.n_states, "a")
    if np.any(a_arr < 0):
        warnings.warn("negative claim sizes: the risk process can jump upwards", stacklevel=2)
    margins = np.array(
        [
            ruin_margin(simulate_swish(kernel, chain, x0, horizon, child(seed, i)), c, a_arr)
            for i in range(n_replicas)
        ]
    )
    levels = np.atleast_1d(np.asarray(u, dtype=float))
    estimates = []
    for level in levels:
        p = float(np.mean(level + margins < 0))
        estimates.append(RuinEstimate(p, math.sqrt(p * (1 - p) / n_replicas), n_replicas))
    return estimates if np.ndim(u) else estimates[0]


def geometric_compound_path(
    path: SwishPath, c, S0: float, include_initial_mark: bool = True
) -> Trajectory:
    """``S_t = S0 prod_{k=0}^{N(t)} (1 + c(x_k))``; the product includes ``x_0`` by default."""
    c = _marks(c, _n_states(path, c), "c")
    if np.any(c <= -1):
        raise InvalidMark(f"all c(x) must exceed -1, got min {c.min()}")
    if not S0 > 0:
        raise NonPositiveParameter(f"S0 must be > 0, got {S0}")
    grid, counts = _jump_grid(path)
    factors = 1.0 + c[path.states]
    if not include_initial_mark:
        factors = factors.copy()
        factors[0] = 1.0
    return Trajectory(grid, S0 * np.cumprod(factors)[counts], path.states[counts])


@numba.njit(cache=True)
def _euler_switched(grid, seg_state, c0, c1, vol, xi0, z):
    out = np.empty(grid.shape[0])
    xi = xi0
    out[0] = xi
    for i in range(1, grid.shape[0]):
        h = grid[i] - grid[i - 1]
        x = seg_state[i - 1]
        xi = xi + (c0[x] + c1[x] * xi) * h + vol[x] * math.sqrt(h) * z[i - 1]
        out[i] = xi
    return out


def switched_diffusion_path(
    path: SwishPath,
    drift: AffineRateFamily,
    vol,
    xi0: float,
    dt: float,
    seed: SeedLike,
) -> Trajectory:
    """Euler-Maruyama for ``d xi = a(xi, x(t)) dt + b(x(t)) dw`` on a grid containing every switch."""
    n_states = _n_states(path, drift.c0, vol)
    c0 = _marks(drift.c0, n_states, "drift.c0")
    c1 = _marks(drift.c1, n_states, "drift.c1")
    vol = _marks(vol, n_states, "vol")
    grid, counts, _ = _refined_grid(path, dt)
    states = path.states[counts]
    z = generator(seed).standard_normal(grid.size - 1)
    return Trajectory(grid, _euler_switched(grid, states, c0, c1, vol, float(xi0), z), states)
