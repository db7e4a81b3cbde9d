"""Vietoris-Rips persistence barcodes in homological degrees 0 and 1."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.spatial.distance import pdist, squareform

from . import _kernels
from .errors import DataError, DomainError, SizeError, UsageError

METRICS = ("euclidean", "cosine")


@dataclass(frozen=True)
class PointCloud:
    """N points in R^D with optional per-point tags.

    ``metadata`` maps a tag name (``"condition"``, ``"layer"``,
    ``"sample"``, ...) to an array holding one entry per point.
    """

    points: np.ndarray
    metadata: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DataError(f"point cloud must be a non-empty N x D matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            bad = int(np.argwhere(~np.isfinite(pts))[0, 0])
            raise DataError(f"non-finite coordinate in point {bad}")
        meta = {}
        for key, values in dict(self.metadata).items():
            values = np.asarray(values)
            if values.ndim == 0 or values.shape[0] != pts.shape[0]:
                raise DataError(f"metadata {key!r} has {values.shape[:1]} entries, expected {pts.shape[0]}")
            meta[key] = values
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "metadata", meta)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def take(self, indices) -> "PointCloud":
        indices = np.asarray(indices, dtype=np.int64)
        return PointCloud(self.points[indices], {k: v[indices] for k, v in self.metadata.items()})


@dataclass(frozen=True)
class DistanceMatrix:
    entries: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self):
        d = np.asarray(self.entries, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise DataError(f"distance matrix must be square and non-empty, got shape {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise DataError("distance matrix entries must be finite and nonnegative")
        if np.any(np.diag(d) != 0):
            raise DataError("distance matrix must have a zero diagonal")
        if not np.array_equal(d, d.T):
            raise DataError("distance matrix must be exactly symmetric")
        object.__setattr__(self, "entries", d)

    @property
    def n_points(self) -> int:
        return self.entries.shape[0]

    def enclosing_radius(self) -> float:
        """Smallest r such that some point lies within r of all others."""
        return float(self.entries.max(axis=1).min())


@dataclass(frozen=True)
class Barcode:
    """Intervals of a degree-0/1 Rips barcode.

    Degree-0 bars come first, sorted by death (the infinite bar last);
    degree-1 bars follow sorted by (birth, death). ``truncated`` marks
    degree-1 classes still alive at ``threshold``; their death is reported
    as the threshold itself.
    """

    dims: np.ndarray
    births: np.ndarray
    deaths: np.ndarray
    truncated: np.ndarray
    threshold: float = np.inf

    def __len__(self):
        return self.dims.shape[0]

    def bars(self, dim: int) -> np.ndarray:
        """(n, 2) array of [birth, death] in the given degree."""
        sel = self.dims == dim
        return np.column_stack([self.births[sel], self.deaths[sel]])

    def finite(self, dim: int) -> np.ndarray:
        b = self.bars(dim)
        return b[np.isfinite(b[:, 1])]

    def intervals(self) -> list[tuple[int, float, float]]:
        return [(int(d), float(b), float(e)) for d, b, e in zip(self.dims, self.births, self.deaths)]


def distance_matrix(cloud: PointCloud | np.ndarray, metric: str = "euclidean") -> DistanceMatrix:
    """Exact pairwise distances of a point cloud.

    Cosine distance is ``1 - u.v / (|u| |v|)``, clipped at 0 from below to
    absorb rounding for (anti)parallel pairs.
    """
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    if metric not in METRICS:
        raise UsageError(f"unknown metric {metric!r}; expected one of {METRICS}")
    pts = cloud.points
    if pts.shape[0] == 1:
        return DistanceMatrix(np.zeros((1, 1)), metric)
    if metric == "cosine":
        norms = np.linalg.norm(pts, axis=1)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise DomainError(f"cosine distance undefined for zero-norm point(s) at index {zero.tolist()}")
        d = np.clip(pdist(pts, "cosine"), 0.0, None)
    else:
        d = pdist(pts, "euclidean")
    return DistanceMatrix(squareform(d), metric)


def _sorted_edges(d: np.ndarray, max_value: float = np.inf):
    ii, jj = np.triu_indices(d.shape[0], 1)
    vals = d[ii, jj]
    if max_value < np.inf:
        keep = vals <= max_value
        ii, jj, vals = ii[keep], jj[keep], vals[keep]
    # triu_indices is already lexicographic, so a stable sort breaks ties by (i, j)
    order = np.argsort(vals, kind="stable")
    return ii[order].astype(np.int64), jj[order].astype(np.int64), vals[order]


def rips_persistence(dist: DistanceMatrix | np.ndarray, max_dim: int = 1, threshold="auto") -> Barcode:
    """Vietoris-Rips barcode of a distance matrix in degrees up to ``max_dim``.

    Degree 0 is computed on the complete graph regardless of ``threshold``;
    degree 1 only uses simplices whose diameter is at most the threshold.
    ``threshold="auto"`` selects the enclosing radius, beyond which the
    complex is a cone and carries no degree-1 homology.
    """
    if not isinstance(dist, DistanceMatrix):
        dist = DistanceMatrix(dist)
    if max_dim not in (0, 1):
        raise UsageError(f"unsupported homology dimension {max_dim}; only 0 and 1 are available")
    if isinstance(threshold, str):
        if threshold != "auto":
            raise UsageError(f"threshold must be a number or 'auto', got {threshold!r}")
        threshold = dist.enclosing_radius()
    threshold = float(threshold)
    if not threshold >= 0:
        raise DomainError(f"threshold must be nonnegative, got {threshold}")
    n = dist.n_points
    if n > _kernels.MAX_POINTS and max_dim == 1:
        raise SizeError(f"degree-1 persistence supports at most {_kernels.MAX_POINTS} points, got {n}")
    d = dist.entries

    # edges up to the enclosing radius already connect every point
    ei, ej, vals = _sorted_edges(d, max(threshold, dist.enclosing_radius()))
    deaths0, in_tree = _kernels.union_find_deaths(n, ei, ej, vals)
    dims = [np.zeros(n, dtype=np.int8)]
    births = [np.zeros(n)]
    deaths = [np.append(deaths0, np.inf)]
    truncated = [np.zeros(n, dtype=bool)]

    if max_dim == 1 and n >= 3:
        m = int(np.searchsorted(vals, threshold, side="right"))
        # vals is sorted, so distinct-value ranks are a running count of changes
        erank = np.zeros(m, dtype=np.int64)
        if m > 1:
            np.cumsum(vals[1:m] != vals[: m - 1], out=erank[1:])
        values = vals[:m][np.r_[True, vals[1:m] != vals[: m - 1]]] if m else vals[:0]
        rank = np.full((n, n), -1, dtype=np.int32)
        rank[ei[:m], ej[:m]] = erank
        rank[ej[:m], ei[:m]] = erank
        edge_pos = np.full((n, n), -1, dtype=np.int64)
        edge_pos[ei[:m], ej[:m]] = np.arange(m)
        b_rank, d_rank, _ = _kernels.cohomology_h1(n, rank, edge_pos, ei[:m], ej[:m], erank, in_tree[:m])
        b1 = values[b_rank]
        alive = d_rank < 0
        d1 = np.where(alive, threshold, values[np.maximum(d_rank, 0)])
        keep = d1 > b1
        b1, d1, alive = b1[keep], d1[keep], alive[keep]
        order = np.lexsort((d1, b1))
        dims.append(np.ones(order.size, dtype=np.int8))
        births.append(b1[order])
        deaths.append(d1[order])
        truncated.append(alive[order])

    return Barcode(
        np.concatenate(dims),
        np.concatenate(births),
        np.concatenate(deaths),
        np.concatenate(truncated),
        threshold,
    )


def barcode(cloud: PointCloud | np.ndarray, metric: str = "euclidean", max_dim: int = 1, threshold="auto") -> Barcode:
    """Shortcut for ``rips_persistence(distance_matrix(cloud, metric), ...)``."""
    return rips_persistence(distance_matrix(cloud, metric), max_dim=max_dim, threshold=threshold)


def subsample(cloud: PointCloud, k: int, seed: int) -> PointCloud:
    """Uniform draw of ``k`` points without replacement.

    Selected indices are sorted and recorded under the ``"source_index"``
    metadata tag; existing tags are carried along.
    """
    n = cloud.n_points
    if k > n:
        raise SizeError(f"cannot draw {k} points from a cloud of {n}")
    if k < 1:
        raise SizeError(f"subsample size must be positive, got {k}")
    idx = np.sort(np.random.default_rng(seed).choice(n, size=k, replace=False))
    out = cloud.take(idx)
    meta = dict(out.metadata)
    meta["source_index"] = cloud.metadata.get("source_index", np.arange(n))[idx]
    return PointCloud(out.points, meta)
