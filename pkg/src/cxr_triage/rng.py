"""Seedable randomness shared by every stochastic step of the pipeline.

All shuffling, stub projections and bootstrap resampling draw from PCG64
generators built here, so identical seeds give identical results on any
platform. Derived streams (e.g. one per bootstrap resample) are keyed by a
tuple seed instead of jumping a shared stream, which keeps them independent
and order-free.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

# Name of the generator backing every random decision in this package.
BIT_GENERATOR = "PCG64"


def make_rng(seed: int | Sequence[int]) -> np.random.Generator:
    """Build the package-wide PCG64 generator for ``seed``.

    ``seed`` is a non-negative integer or a tuple of them. A tuple derives
    an independent substream, e.g. ``(seed, resample_index)``: the first
    element is the entropy and the rest become the spawn key, which keeps
    ``(s, 0)`` distinct from plain ``s`` (SeedSequence zero-pads entropy,
    so putting the whole tuple through the entropy field would collide).
    """
    if isinstance(seed, (int, np.integer)):
        seq = np.random.SeedSequence(seed)
    else:
        head, *rest = seed
        seq = np.random.SeedSequence(head, spawn_key=tuple(rest))
    return np.random.Generator(np.random.PCG64(seq))


def fisher_yates(n: int, rng: np.random.Generator) -> np.ndarray:
    """Return a permutation of ``range(n)`` by the Fisher-Yates shuffle.

    One bounded draw per position, taken from ``rng``; the draw sequence is
    part of the on-disk reproducibility contract, so do not reorder it.
    """
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm
