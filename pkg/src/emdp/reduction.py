"""Reduction from unbounded to bounded datasets via resampling projection.

Users hold datasets of arbitrary, private sizes. Projecting each dataset to a
fixed size s by sampling with replacement is a smooth operation: coupled
samples from two datasets land within (1 + sqrt(2)) times the original earth
mover's distance plus an additive (3/s) ln(1/delta), with probability
1 - delta. Consequently any mechanism with a bounded-data metric guarantee,
applied to the projections, yields a discrete guarantee at radius r for the
original inputs; ``reduction_budget`` computes the metric budget the inner
mechanism must meet.

The projection equalizes the weight of every user's data regardless of how
much they contributed; heterogeneous users are averaged out, which is the
intended semantics only when user distributions are reasonably homogeneous.
"""
from __future__ import annotations

import math
from typing import Any, Callable, Sequence

from .budget import MetricBudget
from .rng import SeedLike, make_rng, substream
from .transport import Multiset


def project(data: Multiset, s: int, seed: SeedLike = 0) -> Multiset:
    """Resample ``data`` to exactly ``s`` items, i.i.d. from its histogram."""
    if data.size == 0:
        raise ValueError("cannot project an empty dataset")
    if s < 1:
        raise ValueError("projected size s must be at least 1")
    rng = make_rng(seed)
    counts = rng.multinomial(s, data.normalize().mass)
    return Multiset(data.space, counts)


def bounded_emd_reduction(
    users: Sequence[Multiset],
    s: int,
    inner: Callable[[list[Multiset]], Any],
    seed: SeedLike = 0,
) -> Any:
    """Project every user's dataset to size ``s`` and run ``inner`` once.

    ``inner`` is an opaque callable receiving the list of projected datasets
    (each of size exactly s); its budget is bound by the caller, typically
    from ``reduction_budget``. Per-user projections use independent
    substreams, so the composite is deterministic given the seed and
    insensitive to evaluation order.
    """
    if not users:
        raise ValueError("need at least one user dataset")
    projected = [project(u, s, substream(seed, i)) for i, u in enumerate(users)]
    return inner(projected)


def reduction_budget(epsilon: float, delta: float, r: float, s: int) -> MetricBudget:
    """Metric budget the inner mechanism needs for an (epsilon, 2*delta, r) result.

    alpha = epsilon / ((1 + sqrt(2)) * r + (3/s) * ln(1/delta)); the additive
    term vanishes as the number of samples grows, leaving the r-discretized
    budget epsilon / ((1 + sqrt(2)) * r).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if not (0.0 < r <= 1.0):
        raise ValueError("radius r must lie in (0, 1]")
    if s < 1:
        raise ValueError("sample count s must be at least 1")
    alpha = epsilon / ((1.0 + math.sqrt(2.0)) * r + (3.0 / s) * math.log(1.0 / delta))
    return MetricBudget(alpha=alpha, delta=delta)
