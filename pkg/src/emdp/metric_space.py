"""Finite metric spaces with normalized pairwise distances.

A space is a dense, immutable table of distances in [0, 1] over an ordered
point set. Two constructions are provided: the clustered space (points grouped
into equal clusters, small intra-cluster distance, unit cross-cluster
distance) and the space induced by a Euclidean embedding table, normalized by
its diameter.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """Ordered finite point set with a normalized distance table.

    Points are identified by 0-based indices. ``labels`` is an optional
    parallel tuple of human-readable identifiers. ``scale`` records the
    divisor applied when the table was normalized (1.0 when the table was
    built directly in normalized units); callers that need original units
    multiply distances back by ``scale``.

    Invariants, enforced at construction within ``ATOL``: zero diagonal,
    symmetry, triangle inequality, and max distance at most 1. The table is
    frozen after validation and safe to share across threads.
    """

    dist: np.ndarray
    labels: tuple = ()
    scale: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
            raise ValueError("distance table must be a nonempty square matrix")
        validate_distance_table(d)
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        if self.labels and len(self.labels) != d.shape[0]:
            raise ValueError("labels length does not match point count")

    @property
    def size(self) -> int:
        return self.dist.shape[0]

    def to_text(self) -> str:
        """Serialize as a header line ``metric k=<n>`` plus the k x k table."""
        lines = [f"metric k={self.size}"]
        for row in self.dist:
            lines.append(" ".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "MetricSpace":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        header = lines[0].split()
        if header[0] != "metric" or not header[1].startswith("k="):
            raise ValueError("expected header 'metric k=<n>'")
        k = int(header[1][2:])
        if len(lines) != k + 1:
            raise ValueError(f"expected {k} distance rows, got {len(lines) - 1}")
        rows = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
        return MetricSpace(np.array(rows))


def validate_distance_table(d: np.ndarray, atol: float = ATOL) -> None:
    """Check metric axioms and normalization; raise ValueError on violation."""
    if np.any(~np.isfinite(d)):
        raise ValueError("distance table contains non-finite entries")
    if np.any(np.abs(np.diag(d)) > atol):
        raise ValueError("diagonal distances must be zero")
    if np.any(np.abs(d - d.T) > atol):
        raise ValueError("distance table must be symmetric")
    if np.any(d < -atol):
        raise ValueError("distances must be nonnegative")
    if d.max() > 1.0 + atol:
        raise ValueError("distances must be normalized to at most 1")
    # Triangle inequality, one intermediate point at a time to keep memory
    # at O(k^2) for larger tables.
    for mid in range(d.shape[0]):
        slack = d - (d[:, mid : mid + 1] + d[mid : mid + 1, :])
        if slack.max() > atol:
            i, j = np.unravel_index(np.argmax(slack), d.shape)
            raise ValueError(
                f"triangle inequality violated on ({i}, {mid}, {j}): "
                f"d={d[i, j]:.12g} > {d[i, mid] + d[mid, j]:.12g}"
            )


@dataclass(frozen=True)
class ClusteredSpace:
    """Parameters of the clustered metric: ``s`` clusters of size ``t``.

    Identical points are at distance 0, same-cluster points at distance
    ``r`` in (0, 1/2), and points in different clusters at distance 1.
    Point order is cluster-major: index = cluster * t + position.
    """

    s: int
    t: int
    r: float

    def __post_init__(self):
        if int(self.s) != self.s or int(self.t) != self.t:
            raise ValueError("cluster counts must be integers")
        if self.s < 1 or self.t < 1:
            raise ValueError("need at least one cluster and one point per cluster")
        if not (0.0 < self.r < 0.5):
            raise ValueError("intra-cluster distance r must lie in (0, 1/2)")

    @property
    def size(self) -> int:
        return self.s * self.t

    def space(self) -> MetricSpace:
        return build_clustered(self.s, self.t, self.r)

    def to_text(self) -> str:
        return f"clustered s={self.s} t={self.t} r={self.r!r}\n"

    @staticmethod
    def from_text(text: str) -> "ClusteredSpace":
        fields_ = dict(tok.split("=") for tok in text.split()[1:])
        return ClusteredSpace(int(fields_["s"]), int(fields_["t"]), float(fields_["r"]))


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Per-point real vectors of a fixed dimension ``dim``."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("embedding table must be a nonempty 2-D array")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


def build_clustered(s: int, t: int, r: float) -> MetricSpace:
    """Construct the s x t clustered space in cluster-major point order."""
    params = ClusteredSpace(s, t, r)
    k = params.size
    d = np.ones((k, k))
    for b in range(s):
        block = slice(b * t, (b + 1) * t)
        d[block, block] = r
    np.fill_diagonal(d, 0.0)
    labels = tuple((b, c) for b in range(s) for c in range(t))
    return MetricSpace(d, labels=labels)


def build_embedding(table: EmbeddingTable | np.ndarray) -> MetricSpace:
    """Metric space of pairwise Euclidean distances, normalized by the diameter.

    The normalization factor (the exact maximum pairwise distance, in the
    embedding's original units) is reported on the result as ``scale``.
    Raises ValueError when all vectors coincide, since a zero-diameter set
    admits no normalization.
    """
    if not isinstance(table, EmbeddingTable):
        table = EmbeddingTable(table)
    v = table.vectors
    diffs = v[:, None, :] - v[None, :, :]
    d = np.sqrt((diffs * diffs).sum(axis=-1))
    diameter = float(d.max())
    if diameter == 0.0:
        raise ValueError("all embedding vectors are identical (zero diameter)")
    return MetricSpace(d / diameter, scale=diameter)


def build_discrete(k: int) -> MetricSpace:
    """Uniform metric: distance 1 between any two distinct points."""
    if k < 1:
        raise ValueError("need at least one point")
    d = np.ones((k, k))
    np.fill_diagonal(d, 0.0)
    return MetricSpace(d)
