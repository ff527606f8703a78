"""Shared generators for randomized property tests.

Random spaces come from Euclidean embeddings (metric axioms hold by
construction) or from random clustered shapes; random histograms are
Dirichlet draws and random multisets are multinomial draws.
"""
from __future__ import annotations

import numpy as np
import pytest

from emdp.metric_space import MetricSpace, build_embedding
from emdp.transport import Histogram, Multiset


def random_space(rng: np.random.Generator, k: int, dim: int = 3) -> MetricSpace:
    while True:
        vectors = rng.standard_normal((k, dim))
        if np.ptp(vectors, axis=0).max() > 0:
            return build_embedding(vectors)


def random_clustered_shape(rng: np.random.Generator, max_side: int = 4) -> tuple[int, int, float]:
    while True:
        s = int(rng.integers(1, max_side + 1))
        t = int(rng.integers(1, max_side + 1))
        if s * t >= 2:
            break
    r = float(rng.uniform(0.05, 0.45))
    return s, t, r


def random_histogram(rng: np.random.Generator, space: MetricSpace) -> Histogram:
    return Histogram(space, rng.dirichlet(np.ones(space.size)))


def random_multiset(rng: np.random.Generator, space: MetricSpace, m: int) -> Multiset:
    probs = rng.dirichlet(np.ones(space.size))
    return Multiset(space, rng.multinomial(m, probs))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240813)
