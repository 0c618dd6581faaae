"""Finite-state Markov chains: validation, simulation, stationary law, potential matrix."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.sparse.csgraph import connected_components

from ._random import SeedLike, generator
from .errors import NotErgodic, NotStochastic, SingularSystem, ValidationError

__all__ = [
    "FiniteMarkovChain",
    "StationaryDistribution",
    "PotentialMatrix",
    "validate_chain",
    "simulate_chain",
    "stationary_distribution",
    "potential_matrix",
    "chain_step_variance",
]

ROW_SUM_TOL = 1e-12


def _structure(transition: np.ndarray) -> tuple[bool, bool]:
    """(irreducible, aperiodic) from the support graph."""
    n = transition.shape[0]
    support = transition > 0
    n_comp, _ = connected_components(support, directed=True, connection="strong")
    if n_comp != 1:
        return False, False
    # period = gcd over edges (u, v) of level(u) + 1 - level(v), levels from BFS
    level = np.full(n, -1)
    level[0] = 0
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(support[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
    period = 0
    for u, v in zip(*np.nonzero(support)):
        period = math.gcd(period, int(level[u] + 1 - level[v]))
        if period == 1:
            break
    return True, period == 1


@dataclass(frozen=True)
class FiniteMarkovChain:
    """Validated stochastic matrix.

    ``ergodic`` means irreducible and aperiodic.  Limit-theory operations only
    need irreducibility: the stationary law and the fundamental matrix exist for
    periodic irreducible chains too.
    """

    transition: np.ndarray = field(repr=False)
    irreducible: bool = field(init=False)
    aperiodic: bool = field(init=False)

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise NotStochastic(f"transition matrix must be square and non-empty, got shape {P.shape}")
        if not np.all(np.isfinite(P)):
            raise NotStochastic("transition matrix has non-finite entries")
        if np.any(P < 0) or np.any(P > 1):
            raise NotStochastic("transition probabilities must lie in [0, 1]")
        sums = P.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise NotStochastic(f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
        P.setflags(write=False)
        object.__setattr__(self, "transition", P)
        irreducible, aperiodic = _structure(P)
        object.__setattr__(self, "irreducible", irreducible)
        object.__setattr__(self, "aperiodic", aperiodic)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def ergodic(self) -> bool:
        return self.irreducible and self.aperiodic

    def require_irreducible(self):
        if not self.irreducible:
            raise NotErgodic("chain is reducible: no unique stationary distribution")


def validate_chain(transition) -> FiniteMarkovChain:
    return FiniteMarkovChain(transition)


@dataclass(frozen=True)
class StationaryDistribution:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def mean(self, values) -> float:
        return float(self.rho @ np.asarray(values, dtype=float))


@dataclass(frozen=True)
class PotentialMatrix:
    r0: np.ndarray


@numba.njit(cache=True)
def _walk(cum, x0, u, out):
    x = x0
    n_states = cum.shape[1]
    for i in range(u.shape[0]):
        row = cum[x]
        j = 0
        while j < n_states - 1 and u[i] >= row[j]:
            j += 1
        x = j
        out[i + 1] = x


def simulate_chain(chain: FiniteMarkovChain, x0: int, n: int, seed: SeedLike) -> np.ndarray:
    """States ``x_0, ..., x_{n-1}`` (``n`` states including the initial one)."""
    if not (0 <= x0 < chain.n_states):
        raise ValidationError(f"x0={x0} is not a state of a {chain.n_states}-state chain")
    if n < 1:
        raise ValidationError("n must be >= 1")
    out = np.empty(n, dtype=np.int64)
    out[0] = x0
    if n > 1:
        cum = np.cumsum(chain.transition, axis=1)
        cum /= cum[:, -1:]
        _walk(cum, int(x0), generator(seed).random(n - 1), out)
    return out


def stationary_distribution(chain: FiniteMarkovChain) -> StationaryDistribution:
    """Solve ``rho (P - I) = 0`` with ``sum(rho) = 1`` directly."""
    chain.require_irreducible()
    n = chain.n_states
    A = chain.transition.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        rho = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    rho = np.clip(rho, 0.0, None)
    return StationaryDistribution(rho / rho.sum())


def potential_matrix(chain: FiniteMarkovChain, rho: StationaryDistribution | None = None) -> PotentialMatrix:
    """Fundamental matrix ``R0 = (I - P + Pi)^{-1}``, so that ``R0 (I - P) = I - Pi``."""
    chain.require_irreducible()
    if rho is None:
        rho = stationary_distribution(chain)
    n = chain.n_states
    Pi = np.tile(rho.rho, (n, 1))
    M = np.eye(n) - chain.transition + Pi
    try:
        r0 = np.linalg.solve(M, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(r0)):
        raise SingularSystem("fundamental matrix has non-finite entries")
    return PotentialMatrix(r0)


def chain_step_variance(chain: FiniteMarkovChain, a) -> float:
    """Asymptotic variance of ``n^{-1/2} sum_k abar(x_k)`` for rho-centred marks.

    Equals ``rho[abar (2 R0 - I - Pi) abar]``; constant shifts of ``a`` do not matter.
    """
    rho = stationary_distribution(chain)
    r0 = potential_matrix(chain, rho).r0
    a = np.asarray(a, dtype=float)
    if a.shape != (chain.n_states,):
        raise ValidationError(f"need one mark per state, got shape {a.shape}")
    abar = a - rho.mean(a)
    # Pi abar = 0 after centring
    value = float(rho.rho @ (abar * (2.0 * (r0 @ abar) - abar)))
    return max(value, 0.0) if value > -1e-12 else value
