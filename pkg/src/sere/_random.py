"""Seed handling.

All randomness flows through :class:`numpy.random.SeedSequence`.  A child stream is
addressed by appending integers to the parent's spawn key, so the mapping
``(seed, key...) -> stream`` is injective and does not depend on call order.
"""
from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]

# stream ids used inside a single SwishP replica
EVENTS_STREAM = 0
CHAIN_STREAM = 1
WIENER_STREAM = 2


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an int or SeedSequence, got {type(seed).__name__}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.SeedSequence(int(seed))


def child(seed: SeedLike, *key: int) -> np.random.SeedSequence:
    """Sub-stream of ``seed`` addressed by ``key``."""
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in key))


def generator(seed: SeedLike) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(as_seed_sequence(seed)))
