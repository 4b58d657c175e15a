"""Exact Euclidean k-nearest-neighbor search into a fixed reference set.

Two routes are provided and they agree element for element:

* :func:`brute_force_knn` scans every reference point.
* :class:`NeighborIndex` uses a k-d tree (``scipy.spatial.cKDTree``) only to
  shortlist candidates. Candidate distances are then recomputed with the same
  arithmetic as the brute-force scan and ordered by ``(distance, id)``, so the
  two routes return bit-identical results, ties included.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from odit.errors import DataError

# relative slack when deciding that the tree shortlist provably contains the k nearest
_SHORTLIST_MARGIN = 1e-9
_BRUTE_CHUNK = 1 << 22


def as_points(data, dim: int | None = None) -> np.ndarray:
    """Validate ``data`` as a nonempty (n, d) float64 array of finite values."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if dim is None or arr.size == dim else arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DataError(f"expected a nonempty 2-D array of points, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DataError(f"dimension mismatch: expected d={dim}, got d={arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argmax(~np.all(np.isfinite(arr), axis=1)))
        raise DataError(f"non-finite value in point {bad}")
    return arr


def as_point(q, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(q, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise DataError("empty point")
    if dim is not None and arr.size != dim:
        raise DataError(f"dimension mismatch: expected d={dim}, got d={arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DataError("non-finite coordinate in point")
    return arr


def _norm_last_axis(diff: np.ndarray) -> np.ndarray:
    # Column-by-column accumulation: the result for a row never depends on how
    # rows are batched, which is what makes the two search routes bit-identical.
    acc = diff[..., 0] * diff[..., 0]
    for j in range(1, diff.shape[-1]):
        acc = acc + diff[..., j] * diff[..., j]
    return np.sqrt(acc)


def euclidean_distance(a: Sequence[float], b: Sequence[float]) -> float:
    a = as_point(a)
    b = as_point(b, dim=a.size)
    return float(_norm_last_axis((a - b)[None, :])[0])


def _order_rows(ids: np.ndarray, dists: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((ids, dists), axis=-1)[:, :k]
    return (np.take_along_axis(ids, order, axis=-1),
            np.take_along_axis(dists, order, axis=-1))


def brute_force_knn(points: np.ndarray, queries: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Exhaustive k-NN scan. Returns ``(ids, dists)``, each of shape (m, k)."""
    points = np.asarray(points, dtype=np.float64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n = points.shape[0]
    if not 1 <= k <= n:
        raise DataError(f"k must be in [1, {n}], got {k}")
    out_ids = np.empty((queries.shape[0], k), dtype=np.int64)
    out_d = np.empty((queries.shape[0], k), dtype=np.float64)
    step = max(1, _BRUTE_CHUNK // max(1, n * points.shape[1]))
    all_ids = np.arange(n, dtype=np.int64)
    for lo in range(0, queries.shape[0], step):
        q = queries[lo:lo + step]
        d = _norm_last_axis(points[None, :, :] - q[:, None, :])
        ids = np.broadcast_to(all_ids, d.shape)
        out_ids[lo:lo + step], out_d[lo:lo + step] = _order_rows(ids, d, k)
    return out_ids, out_d


class NeighborIndex:
    """Immutable k-d tree index over a reference point set.

    Query answers are identical to :func:`brute_force_knn`; see the module
    docstring for how exactness is guaranteed.
    """

    def __init__(self, points) -> None:
        pts = as_points(points).copy()
        pts.setflags(write=False)
        self._points = pts
        self._tree = cKDTree(pts, leafsize=16, balanced_tree=True, compact_nodes=True)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def __len__(self) -> int:
        return self._points.shape[0]

    def __repr__(self) -> str:
        return f"NeighborIndex(size={len(self)}, dim={self.dim})"

    def query(self, queries, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """Batch k-NN. Returns ``(ids, dists)`` of shape (m, k), sorted by (distance, id)."""
        n = len(self)
        if not isinstance(k, (int, np.integer)) or not 1 <= k <= n:
            raise DataError(f"k must be an integer in [1, {n}], got {k!r}")
        q = as_points(queries, dim=self.dim)
        kk = min(n, k + 2)
        tree_d, cand = self._tree.query(q, k=kk)
        tree_d = np.asarray(tree_d).reshape(q.shape[0], kk)
        cand = np.asarray(cand, dtype=np.int64).reshape(q.shape[0], kk)

        exact = _norm_last_axis(self._points[cand] - q[:, None, :])
        ids, dists = _order_rows(cand, exact, k)
        if kk < n:
            # Points outside the shortlist are at least as far as the last
            # shortlisted one; if that is not clearly beyond the k-th distance a
            # tie or rounding could hide a better point, so rescan those rows.
            kth = dists[:, -1]
            unsafe = ~(tree_d[:, -1] > kth * (1.0 + _SHORTLIST_MARGIN) + 1e-300)
            if np.any(unsafe):
                rows = np.flatnonzero(unsafe)
                ids[rows], dists[rows] = brute_force_knn(self._points, q[rows], k)
        return ids, dists


def build_index(points) -> NeighborIndex:
    return NeighborIndex(points)


def knn_query(index: NeighborIndex, q, k: int) -> List[Tuple[int, float]]:
    """k nearest reference points to a single query, as ``[(id, distance), ...]``."""
    ids, dists = index.query(as_point(q, dim=index.dim)[None, :], k)
    return [(int(i), float(d)) for i, d in zip(ids[0], dists[0])]
