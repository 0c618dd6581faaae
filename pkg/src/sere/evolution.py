"""Matrix realisation of self-exciting random evolutions in R^d.

The evolution over a SwishP path is the ordered product

    V(t) = exp((t - tau_N) G(x_N)) D(x_N) exp(theta_N G(x_{N-1})) ... D(x_1) exp(theta_1 G(x_0))

with the newest factor on the left.  The scaled versions replace ``theta_k`` by
``eps * theta_k`` and ``D`` by ``I + eps D1 + eps^2 D2``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from ._random import SeedLike
from .errors import HorizonTooShort, MatrixOverflow, ValidationError
from .hawkes import ExpHawkesKernel
from .markov import FiniteMarkovChain, StationaryDistribution
from .swish import SwishPath, simulate_swish

__all__ = [
    "MatrixFamily",
    "matrix_exponential",
    "evolve_product",
    "evolution_flow_time",
    "integral_equation_residual",
    "simulate_scaled_evolution",
    "balance_residual",
    "NORM_WARNING",
]

NORM_WARNING = 1e6
_TAYLOR_ORDER = 18
_SCALE_TARGET = 0.5
_OVERFLOW_NORM = 700.0


@numba.njit(cache=True)
def _expm(A):
    # Scaling and squaring with a truncated Taylor core. With ||A / 2^s||_1 <= 0.5
    # the degree-18 remainder is below 1e-22 relative.
    n = A.shape[0]
    norm = 0.0
    for j in range(n):
        col = 0.0
        for i in range(n):
            col += abs(A[i, j])
        norm = max(norm, col)
    s = 0
    if norm > _SCALE_TARGET:
        s = int(math.ceil(math.log2(norm / _SCALE_TARGET)))
    X = A / (2.0**s)
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, _TAYLOR_ORDER + 1):
        term = term @ X / k
        result = result + term
    for _ in range(s):
        result = result @ result
    return result


def matrix_exponential(M, t: float = 1.0) -> np.ndarray:
    """``exp(t M)`` for a square matrix."""
    A = np.asarray(M, dtype=float) * float(t)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"need a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix has non-finite entries")
    if np.abs(A).sum(axis=0).max(initial=0.0) > _OVERFLOW_NORM:
        raise MatrixOverflow("norm of t*M too large for a finite exponential")
    out = _expm(np.ascontiguousarray(A))
    if not np.all(np.isfinite(out)):
        raise MatrixOverflow("matrix exponential overflowed")
    return out


def _stack(mats, n_states: int, dim: int, name: str) -> np.ndarray:
    arr = np.array(mats, dtype=float)
    if arr.shape != (n_states, dim, dim):
        raise ValidationError(f"{name}: expected shape {(n_states, dim, dim)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MatrixFamily:
    """Per-state generators ``gamma[x]`` and jump expansion terms ``d1[x]``, ``d2[x]``."""

    gamma: np.ndarray = field(repr=False)
    d1: np.ndarray = field(repr=False)
    d2: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        if g.ndim != 3 or g.shape[1] != g.shape[2]:
            raise ValidationError(f"gamma must have shape (n_states, d, d), got {g.shape}")
        n, d = g.shape[0], g.shape[1]
        object.__setattr__(self, "gamma", _stack(g, n, d, "gamma"))
        object.__setattr__(self, "d1", _stack(self.d1, n, d, "d1"))
        d2 = np.zeros((n, d, d)) if self.d2 is None else self.d2
        object.__setattr__(self, "d2", _stack(d2, n, d, "d2"))

    @property
    def n_states(self) -> int:
        return self.gamma.shape[0]

    @property
    def dim(self) -> int:
        return self.gamma.shape[1]

    def jump_operators(self, epsilon: float, order: int = 1) -> np.ndarray:
        """``I + eps D1`` (order 1) or ``I + eps D1 + eps^2 D2`` (order 2); the o() terms are zero."""
        eye = np.eye(self.dim)
        if order == 1:
            return eye + epsilon * self.d1
        if order == 2:
            return eye + epsilon * self.d1 + epsilon**2 * self.d2
        raise ValidationError(f"order must be 1 or 2, got {order}")

    def __add__(self, other: "MatrixFamily") -> "MatrixFamily":
        return MatrixFamily(self.gamma + other.gamma, self.d1 + other.d1, self.d2 + other.d2)


@numba.njit(cache=True)
def _product(theta, states, gamma, jumps, flow_scale, final_time):
    d = gamma.shape[1]
    V = np.eye(d)
    peak = 0.0
    for k in range(theta.shape[0]):
        V = jumps[states[k + 1]] @ (_expm(gamma[states[k]] * (flow_scale * theta[k])) @ V)
        peak = max(peak, np.abs(V).max())
    V = _expm(gamma[states[theta.shape[0]]] * final_time) @ V
    peak = max(peak, np.abs(V).max())
    return V, peak


def evolution_flow_time(epsilon: float, t: float, order: int) -> float:
    """Unscaled horizon the path must cover: ``t/eps`` or ``t/eps^2``."""
    return t / epsilon if order == 1 else t / epsilon**2


def evolve_product(
    path: SwishPath, family: MatrixFamily, epsilon: float = 1.0, t: float = 1.0, order: int = 1
) -> np.ndarray:
    """Ordered product for the scaled evolution at time ``t``.

    Order 1 uses the events up to ``t/eps`` with flow times ``eps * theta_k`` and a
    final flow of ``t - eps tau_N``.  Order 2 uses events up to ``t/eps^2``, the same
    flow times, and a final flow of ``t/eps - eps tau_N``.
    """
    if not epsilon > 0:
        raise ValidationError("epsilon must be > 0")
    if order not in (1, 2):
        raise ValidationError(f"order must be 1 or 2, got {order}")
    horizon = evolution_flow_time(epsilon, t, order)
    if path.horizon < horizon * (1 - 1e-12):
        raise HorizonTooShort(f"path horizon {path.horizon} < required {horizon}")
    if int(path.states.max()) >= family.n_states:
        raise ValidationError("path visits a state outside the matrix family")
    n = path.events.count(horizon)
    times = path.times[:n]
    theta = np.diff(times, prepend=0.0)
    last = times[-1] if n else 0.0
    final = (t - epsilon * last) if order == 1 else (t / epsilon - epsilon * last)
    jumps = np.ascontiguousarray(family.jump_operators(epsilon, order))
    V, peak = _product(
        theta, np.ascontiguousarray(path.states[: n + 1]), family.gamma, jumps, float(epsilon), float(final)
    )
    if not np.all(np.isfinite(V)):
        raise MatrixOverflow("evolution overflowed")
    if peak > NORM_WARNING:
        warnings.warn(f"evolution norm reached {peak:.3g}", RuntimeWarning, stacklevel=2)
    return V


def integral_equation_residual(
    path: SwishPath,
    family: MatrixFamily,
    f,
    t: float,
    dt: float,
    ordering: str = "product",
) -> float:
    """Max-norm residual of the integral equation solved by the unscaled evolution.

    With ``ordering="product"`` the equation checked is the one the ordered product
    satisfies, ``V(t)f = f + int_0^t G(x(s)) V(s) f ds + sum_k [D(x_k) - I] V(tau_k-) f``.
    ``ordering="right"`` checks ``V(s) G(x(s)) f`` and ``V(tau_k-) [D(x_k) - I] f``
    instead, which the product satisfies only when the matrices commute.

    The integral is a composite trapezoid on a ``dt`` grid merged with the event
    times, so the residual is O(dt^2).  Here ``D = I + D1 + D2``.
    """
    if ordering not in ("product", "right"):
        raise ValidationError(f"unknown ordering {ordering!r}")
    if not dt > 0:
        raise ValidationError("dt must be > 0")
    if path.horizon < t:
        raise HorizonTooShort(f"path horizon {path.horizon} < t={t}")
    f = np.asarray(f, dtype=float)
    d = family.dim
    eye = np.eye(d)
    D = family.jump_operators(1.0, 2)
    n = path.events.count(t)
    events = path.times[:n]
    regular = np.arange(int(math.floor(t / dt)) + 1) * dt
    grid = np.union1d(np.union1d(regular[regular < t], events), [t])
    event_set = set(events.tolist())

    V = eye.copy()
    integral = np.zeros(d)
    jump_sum = np.zeros(d)
    k = 0  # events passed so far; current state is states[k]
    for i in range(1, grid.size):
        h = grid[i] - grid[i - 1]
        G = family.gamma[path.states[k]]
        V_next = matrix_exponential(G, h) @ V
        if ordering == "product":
            integral += 0.5 * h * (G @ V @ f + G @ V_next @ f)
        else:
            integral += 0.5 * h * (V @ G @ f + V_next @ G @ f)
        V = V_next
        if grid[i] in event_set:
            k += 1
            Dk = D[path.states[k]]
            if ordering == "product":
                jump_sum += (Dk - eye) @ V @ f
            else:
                jump_sum += V @ (Dk - eye) @ f
            V = Dk @ V
    lhs = V @ f
    # V from the grid recursion equals evolve_product at eps=1 (same factors)
    return float(np.abs(lhs - (f + integral + jump_sum)).max())


def simulate_scaled_evolution(
    kernel: ExpHawkesKernel,
    chain: FiniteMarkovChain,
    family: MatrixFamily,
    f,
    epsilon: float,
    t: float,
    order: int,
    seed: SeedLike,
    x0: int = 0,
) -> np.ndarray:
    """One replica of ``V_eps(t) f`` on a freshly simulated SwishP."""
    if not (0 < epsilon <= 1):
        raise ValidationError("epsilon must lie in (0, 1]")
    if not t > 0:
        raise ValidationError("t must be > 0")
    path = simulate_swish(kernel, chain, x0, evolution_flow_time(epsilon, t, order), seed)
    return evolve_product(path, family, epsilon, t, order) @ np.asarray(f, dtype=float)


def balance_residual(family: MatrixFamily, rho: StationaryDistribution, m: float) -> float:
    """Max-norm of ``sum_x rho(x) [m G(x) + D1(x)]``."""
    rho = rho.rho if isinstance(rho, StationaryDistribution) else np.asarray(rho, dtype=float)
    if rho.shape != (family.n_states,):
        raise ValidationError("rho length does not match the family")
    avg = np.tensordot(rho, m * family.gamma + family.d1, axes=1)
    return float(np.abs(avg).max())
