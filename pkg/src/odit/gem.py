"""Bipartite GEM baseline and per-sample outlier evidence.

Training splits the nominal set at random into a vertex-candidate part and a
reference part. Every candidate gets a total edge length (sum of its
``(k-s+1)``-th .. ``k``-th nearest-neighbor distances into the reference part,
each raised to ``gamma``) and the ``K`` smallest are kept. The outlier evidence
of a new point is its own total edge length minus the largest kept one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from odit.errors import ConfigError
from odit.neighbors import NeighborIndex, as_point, as_points


class Decision(str, enum.Enum):
    NOMINAL = "nominal"
    ANOMALOUS = "anomalous"


def default_gamma(dim: int) -> float:
    return 1.0 if dim >= 2 else 0.5


@dataclass(frozen=True)
class GemParams:
    """BP-GEM hyperparameters.

    ``gamma`` and ``K`` may be left as ``None``; :meth:`resolve` fills them in
    once the data dimension and partition sizes are known (``gamma`` = 1 for
    d >= 2 and 0.5 for d = 1; ``K = round((1 - alpha) * N1)``).
    """

    k: int = 1
    s: int = 1
    gamma: Optional[float] = None
    alpha: float = 0.05
    K: Optional[int] = None
    partition_fraction: float = 0.1
    seed: int = 0

    def check(self) -> None:
        problems = []
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            problems.append(f"k must be a positive integer, got {self.k!r}")
        if not isinstance(self.s, (int, np.integer)) or not 1 <= self.s <= self.k:
            problems.append(f"s must be an integer in [1, k={self.k}], got {self.s!r}")
        if not 0.0 < self.alpha < 1.0:
            problems.append(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not 0.0 < self.partition_fraction < 1.0:
            problems.append(f"partition_fraction must lie in (0, 1), got {self.partition_fraction!r}")
        if self.gamma is not None and not self.gamma > 0:
            problems.append(f"gamma must be positive, got {self.gamma!r}")
        if self.K is not None and (not isinstance(self.K, (int, np.integer)) or self.K < 1):
            problems.append(f"K must be a positive integer, got {self.K!r}")
        if problems:
            raise ConfigError("; ".join(problems))

    def split_sizes(self, n: int) -> Tuple[int, int]:
        n1 = int(round(self.partition_fraction * n))
        return n1, n - n1

    def resolve(self, n: int, dim: int) -> "GemParams":
        """Return a copy with ``gamma`` and ``K`` concrete, validated for ``n`` points in ``dim``."""
        self.check()
        gamma = default_gamma(dim) if self.gamma is None else float(self.gamma)
        if not 0.0 < gamma < dim:
            raise ConfigError(f"gamma must satisfy 0 < gamma < d={dim}, got {gamma}")
        n1, n2 = self.split_sizes(n)
        K = int(round((1.0 - self.alpha) * n1)) if self.K is None else int(self.K)
        if n < 2 or n1 < 1 or n2 < 1:
            raise ConfigError(f"cannot partition {n} points with fraction {self.partition_fraction}")
        if not 1 <= K <= n1:
            raise ConfigError(f"K={K} must lie in [1, N1={n1}]")
        if self.k > n2:
            raise ConfigError(f"k={self.k} exceeds reference partition size N2={n2}")
        return replace(self, gamma=gamma, K=K)


def _partition_indices(n: int, params: GemParams) -> Tuple[np.ndarray, np.ndarray]:
    n1, _ = params.split_sizes(n)
    perm = np.random.default_rng(params.seed).permutation(n)
    # each part keeps the original training order
    return np.sort(perm[:n1]), np.sort(perm[n1:])


def partition_training(data, params: GemParams) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded random split into (vertex candidates, reference set)."""
    pts = as_points(data)
    params.resolve(pts.shape[0], pts.shape[1])
    i1, i2 = _partition_indices(pts.shape[0], params)
    return pts[i1], pts[i2]


def total_edge_lengths(queries, ref: NeighborIndex, params: GemParams) -> np.ndarray:
    """Vectorized :func:`total_edge_length` for an (m, d) array of queries."""
    k, s = params.k, params.s
    gamma = default_gamma(ref.dim) if params.gamma is None else params.gamma
    _, dists = ref.query(queries, k)
    tail = dists[:, k - s:]
    if gamma != 1.0:
        tail = np.power(tail, gamma)
    total = tail[:, 0].copy()
    for j in range(1, s):
        total += tail[:, j]
    return total


def total_edge_length(q, ref: NeighborIndex, params: GemParams) -> float:
    return float(total_edge_lengths(as_point(q, dim=ref.dim)[None, :], ref, params)[0])


@dataclass(frozen=True, eq=False)
class GemModel:
    """Trained baseline. Immutable; scoring never re-selects vertices."""

    reference_index: NeighborIndex
    params: GemParams
    baseline_lengths: np.ndarray
    threshold_length: float
    training_sizes: Tuple[int, int]
    selected: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.reference_index.dim

    def scores(self, X) -> np.ndarray:
        X = as_points(X, dim=self.dim)
        return total_edge_lengths(X, self.reference_index, self.params) - self.threshold_length

    def score(self, x) -> float:
        return float(self.scores(as_point(x, dim=self.dim)[None, :])[0])


def train_baseline(data, params: GemParams = GemParams()) -> GemModel:
    """Fit the BP-GEM baseline on nominal ``data``.

    Ties at the K-th smallest length keep the earlier training point.
    ``selected`` holds the chosen vertices as indices into ``data``.
    """
    pts = as_points(data)
    params = params.resolve(pts.shape[0], pts.shape[1])
    i1, i2 = _partition_indices(pts.shape[0], params)
    ref = NeighborIndex(pts[i2])
    lengths = total_edge_lengths(pts[i1], ref, params)
    order = np.argsort(lengths, kind="stable")[: params.K]
    baseline = lengths[order]
    baseline.setflags(write=False)
    selected = i1[order]
    selected.setflags(write=False)
    return GemModel(
        reference_index=ref,
        params=params,
        baseline_lengths=baseline,
        threshold_length=float(baseline[-1]),
        training_sizes=(int(i1.size), int(i2.size)),
        selected=selected,
    )


def outlier_score(model: GemModel, x) -> float:
    """Outlier evidence: total edge length of ``x`` minus the baseline threshold length."""
    return model.score(x)


def outlier_decide(D: float) -> Decision:
    return Decision.NOMINAL if D <= 0 else Decision.ANOMALOUS
