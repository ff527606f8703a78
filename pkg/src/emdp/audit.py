"""Brute-force privacy verification on tiny domains.

The hockey-stick divergence D_{e^eps}(P || Q) = sum_y max(P(y) - e^eps Q(y), 0)
is at most delta exactly when P and Q are (eps, delta)-indistinguishable, so
on domains small enough to enumerate it decides privacy claims outright. This
module checks item-level metric DP of a channel pair by pair, computes the
exact law of the shuffled item-wise release over output multisets, and
exhaustively audits the user-level metric guarantee over all equal-size
dataset pairs.

Continuous-noise mechanisms (gamma, Gaussian) are out of scope here; their
guarantees are analytic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement, product
from typing import Mapping, Union

import numpy as np

from .shuffle_amp import TransitionMechanism
from .transport import Multiset, emd

_TOL = 1e-12
TRACTABILITY_LIMIT = 10**6

Distribution = Union[np.ndarray, Mapping]


@dataclass(frozen=True)
class AuditResult:
    """Outcome of an exhaustive privacy check."""

    passed: bool
    alpha: float
    delta: float
    worst_pair: tuple
    divergence: float

    @property
    def slack(self) -> float:
        """Worst divergence minus the allowed delta (<= tolerance iff passed)."""
        return self.divergence - self.delta


def hockey_stick(p: Distribution, q: Distribution, eps: float) -> float:
    """sum_y max(P(y) - e^eps * Q(y), 0) over a shared finite support."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if isinstance(p, Mapping) != isinstance(q, Mapping):
        raise ValueError("distributions must share a representation")
    if isinstance(p, Mapping):
        if set(p.keys()) != set(q.keys()):
            raise ValueError("distributions have mismatched supports")
        keys = list(p.keys())
        pv = np.array([p[k] for k in keys], dtype=float)
        qv = np.array([q[k] for k in keys], dtype=float)
    else:
        pv = np.asarray(p, dtype=float)
        qv = np.asarray(q, dtype=float)
        if pv.shape != qv.shape:
            raise ValueError("distributions have mismatched supports")
    return float(np.clip(pv - math.exp(eps) * qv, 0.0, None).sum())


def verify_item_metric_dp(mech: TransitionMechanism, alpha: float, delta: float) -> AuditResult:
    """Check every ordered pair of rows at budget (alpha * d(x, x'), delta)."""
    a = mech.matrix
    dist = mech.space.dist
    worst: tuple = ()
    worst_div = -1.0
    for x in range(mech.space.size):
        for xp in range(mech.space.size):
            if x == xp:
                continue
            div = hockey_stick(a[x], a[xp], alpha * dist[x, xp])
            if div > worst_div:
                worst_div = div
                worst = (x, xp)
    worst_div = max(worst_div, 0.0)
    return AuditResult(
        passed=worst_div <= delta + _TOL,
        alpha=alpha,
        delta=delta,
        worst_pair=worst,
        divergence=worst_div,
    )


def exact_itemwise_distribution(data: Multiset, mech: TransitionMechanism) -> dict[tuple, float]:
    """Exact law of the shuffled item-wise release over output multisets.

    Enumerates the |Y|^m ordered output tuples, multiplies the per-item
    channel probabilities, and accumulates onto canonical count-vector keys.
    Every multiset of size m gets a key, so laws for same-size datasets share
    a support. Raises when |Y|^m exceeds the tractability limit.
    """
    m = data.size
    if m == 0:
        raise ValueError("dataset is empty")
    y = mech.out_size
    if y**m > TRACTABILITY_LIMIT:
        raise ValueError(f"intractable enumeration: {y}^{m} ordered tuples")
    items = data.items()
    rows = mech.matrix[items]
    law: dict[tuple, float] = {key: 0.0 for key in _count_vectors(m, y)}
    for outputs in product(range(y), repeat=m):
        prob = 1.0
        for i, out in enumerate(outputs):
            prob *= rows[i, out]
        key = np.bincount(outputs, minlength=y)
        law[tuple(int(v) for v in key)] += prob
    return law


def _count_vectors(m: int, y: int):
    for combo in combinations_with_replacement(range(y), m):
        yield tuple(int(v) for v in np.bincount(combo, minlength=y))


def verify_emd_dp(mech: TransitionMechanism, m: int, alpha: float, delta: float) -> AuditResult:
    """Exhaustively audit the user-level guarantee over size-m dataset pairs.

    For every ordered pair of size-m multisets K, K' on the channel's input
    space, checks that the exact output laws are within hockey-stick
    divergence delta at eps = alpha * emd(K_tilde, K'_tilde). Reports the
    worst pair as their count vectors.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    k = mech.space.size
    datasets = [
        Multiset(mech.space, np.bincount(combo, minlength=k))
        for combo in combinations_with_replacement(range(k), m)
    ]
    laws = [exact_itemwise_distribution(d, mech) for d in datasets]
    histograms = [d.normalize() for d in datasets]
    worst = ((), ())
    worst_div = -1.0
    for i in range(len(datasets)):
        for j in range(len(datasets)):
            if i == j:
                continue
            cost, _ = emd(histograms[i], histograms[j])
            div = hockey_stick(laws[i], laws[j], alpha * cost)
            if div > worst_div:
                worst_div = div
                worst = (tuple(datasets[i].counts.tolist()), tuple(datasets[j].counts.tolist()))
    worst_div = max(worst_div, 0.0)
    return AuditResult(
        passed=worst_div <= delta + _TOL,
        alpha=alpha,
        delta=delta,
        worst_pair=worst,
        divergence=worst_div,
    )
