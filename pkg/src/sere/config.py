"""Flat TOML experiment configuration."""
from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .evolution import MatrixFamily
from .hawkes import ExpHawkesKernel
from .markov import FiniteMarkovChain
from .swish import AffineRateFamily

KINDS = (
    "lln",
    "averaging_traffic",
    "averaging_summation",
    "averaging_operator",
    "diffusion_summation",
    "diffusion_traffic",
    "diffusion_operator",
    "ruin",
)
AVERAGING_KINDS = ("averaging_traffic", "averaging_summation", "averaging_operator")
DIFFUSION_KINDS = ("diffusion_summation", "diffusion_traffic", "diffusion_operator")
PROCESSES = ("swish", "compound", "impulse_traffic", "risk", "geometric", "switched_diffusion")

DEFAULT_LADDER = (0.2, 0.1, 0.05, 0.02)
MIN_REPLICAS = 100


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    lambda_base: float = 1.0
    alpha: float = 1.0
    beta: float = 2.0
    transition: List[List[float]] = field(default_factory=lambda: [[1.0]])
    x0: int = 0
    # per-state marks a(x) (summation / impulse jumps / claim sizes)
    marks: Optional[List[float]] = None
    # affine velocity v(z, x) = rate_c0[x] + rate_c1[x] z (traffic, switched drift)
    rate_c0: Optional[List[float]] = None
    rate_c1: Optional[List[float]] = None
    gamma: Optional[list] = None
    d1: Optional[list] = None
    d2: Optional[list] = None
    f: Optional[List[float]] = None
    epsilon_ladder: List[float] = field(default_factory=lambda: list(DEFAULT_LADDER))
    t: float = 1.0
    n_replicas: int = 1000
    seed: int = 0
    output_path: str = "report.csv"
    z0: float = 0.0
    dt: float = 0.01
    em_dt: float = 1e-3
    m: Optional[float] = None
    m2: Optional[float] = None
    n_moment_events: int = 200_000
    n_batches: int = 20
    ks_alpha: float = 0.01
    min_ks_passes: int = 17
    rel_tol: Optional[float] = None
    n_std_err: float = 3.0
    allowed_inversions: int = 1
    max_events: int = 100_000_000
    # risk process
    u: float = 0.0
    u_ladder: Optional[List[float]] = None
    premium: float = 1.0
    horizon: float = 10.0
    # simulate subcommand
    process: str = "swish"
    geometric_c: Optional[List[float]] = None
    S0: float = 1.0
    vol: Optional[List[float]] = None
    xi0: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.process not in PROCESSES:
            raise ConfigError(f"process must be one of {PROCESSES}, got {self.process!r}")
        ladder = [float(e) for e in self.epsilon_ladder]
        if not ladder:
            raise ConfigError("epsilon_ladder must not be empty")
        if any(not (0 < e <= 1) for e in ladder):
            raise ConfigError("epsilon_ladder entries must lie in (0, 1]")
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigError("epsilon_ladder must be strictly decreasing")
        object.__setattr__(self, "epsilon_ladder", ladder)
        if self.n_replicas < MIN_REPLICAS:
            raise ConfigError(f"n_replicas must be >= {MIN_REPLICAS}")
        if not self.t > 0:
            raise ConfigError("t must be > 0")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    # -- model objects; validation errors propagate with their own types --
    def kernel(self) -> ExpHawkesKernel:
        return ExpHawkesKernel(self.lambda_base, self.alpha, self.beta)

    def chain(self) -> FiniteMarkovChain:
        return FiniteMarkovChain(self.transition)

    def require(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"kind={self.kind} requires keys: {', '.join(missing)}")

    def mark_vector(self, name: str = "marks") -> np.ndarray:
        self.require(name)
        n = len(self.transition)
        arr = np.asarray(getattr(self, name), dtype=float)
        if arr.shape != (n,):
            raise ConfigError(f"{name} must have one entry per state ({n})")
        return arr

    def rate_family(self) -> AffineRateFamily:
        self.require("rate_c0")
        c0 = self.mark_vector("rate_c0")
        c1 = self.mark_vector("rate_c1") if self.rate_c1 is not None else np.zeros_like(c0)
        return AffineRateFamily(c0, c1)

    def matrix_family(self) -> MatrixFamily:
        self.require("gamma", "d1")
        fam = MatrixFamily(self.gamma, self.d1, self.d2)
        if fam.n_states != len(self.transition):
            raise ConfigError("gamma must have one matrix per chain state")
        return fam

    def f_vector(self, dim: int) -> np.ndarray:
        f = np.ones(dim) if self.f is None else np.asarray(self.f, dtype=float)
        if f.shape != (dim,):
            raise ConfigError(f"f must have length {dim}")
        return f


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(data: dict) -> ExperimentConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "kind" not in data:
        raise ConfigError("config must set 'kind'")
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(f"{key}: nested tables are not supported")
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"{key}: value must be finite")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(Path(path), "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)
