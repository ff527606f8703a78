"""Seeded random streams with reproducible substreams.

Every randomized operation in this package takes a ``seed`` argument that is
either a nonnegative integer or an already-constructed ``numpy`` Generator.
Independent substreams (per user, per trial, per grid cell) are derived from
an integer path so that results do not depend on iteration order or on the
number of worker processes.
"""
from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.Generator]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Return a Generator for ``seed``; Generators pass through untouched."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return np.random.default_rng(seed)


def substream(seed: SeedLike, *path: int) -> np.random.Generator:
    """Derive an independent Generator keyed by (seed, *path).

    Distinct paths yield statistically independent streams; the same
    (seed, path) always yields the same stream.
    """
    if isinstance(seed, np.random.Generator):
        # Child stream of an existing generator: draw a fresh base seed once.
        base = int(seed.integers(0, 2**63 - 1))
        return np.random.default_rng(np.random.SeedSequence([base, *path]))
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *path]))
