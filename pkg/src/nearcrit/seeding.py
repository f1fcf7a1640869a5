"""Seeding rules used throughout the package.

Two documented splitting rules:

* Ensembles of trajectories: trajectory ``i`` of an ensemble with base seed
  ``b`` uses the integer seed ``b + i``.
* Per-state Monte Carlo (drift estimation, condition sampling): state ``i``
  uses ``numpy.random.SeedSequence(b, spawn_key=(i,))``.

Both are pure functions of (base seed, index), so any work distribution
over workers reproduces the sequential results exactly.
"""
from __future__ import annotations

import numpy as np


def rng_from(seed_or_rng) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, or a Generator; return a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def spawned_rng(base_seed: int, index: int) -> np.random.Generator:
    """Independent stream for task ``index`` under ``base_seed``."""
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(index,)))


def trajectory_seed(base_seed: int, index: int) -> int:
    """Seed of trajectory ``index`` in an ensemble."""
    return base_seed + index


def draw_signs(rng: np.random.Generator, n: int | None = None):
    """Fair +-1 variables; a pair for n=None, else (n, 2) pairs.

    Scalar draws use two uniforms compared against 1/2; batch draws use a
    vectorized integer fill. The two layouts are independent streams and
    each is deterministic under a fixed seed.
    """
    if n is None:
        return (1.0 if rng.random() < 0.5 else -1.0,
                1.0 if rng.random() < 0.5 else -1.0)
    return rng.integers(0, 2, size=(n, 2)) * 2.0 - 1.0
