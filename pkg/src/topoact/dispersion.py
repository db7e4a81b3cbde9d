"""Local dispersion ratios, Welch tests with BH correction, and cosine bootstraps.

These operate on per-input difference vectors, one M x D matrix per layer
with a condition label per row.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist

from .errors import DataError, DegenerateInputError, DomainError, SizeError, UsageError

DISPERSION_EPS = 1e-12
LABELS = ("clean", "poisoned", "executed", "refused", "ignored", "locked", "elicited")
ABLATION_MODES = ("clean_clean", "poisoned_poisoned", "mixed_mixed")


@dataclass(frozen=True)
class DiffRepresentation:
    vectors: np.ndarray
    labels: np.ndarray
    layer: int = 0

    def __post_init__(self):
        X = np.asarray(self.vectors, dtype=np.float64)
        y = np.asarray(self.labels).astype(str)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DataError(f"need an M x D matrix with M labels, got {X.shape} and {y.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError(f"layer {self.layer}: non-finite difference vector at row {int(np.argwhere(~np.isfinite(X))[0, 0])}")
        unknown = sorted(set(y.tolist()) - set(LABELS))
        if unknown:
            raise DataError(f"layer {self.layer}: unknown labels {unknown}")
        object.__setattr__(self, "vectors", X)
        object.__setattr__(self, "labels", y)

    def rows(self, label: str) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


# ------------------------------------------------------ dispersion ratio


@dataclass(frozen=True)
class DispersionRatios:
    """Per-row ratio of non-leading to leading neighborhood eigenvalues.

    ``n_components`` is the number of numerically positive eigenvalues of
    each neighborhood.
    """

    ratio: np.ndarray
    n_components: np.ndarray
    k: int


def knn_indices(X: np.ndarray, k: int, chunk: int = 1024) -> np.ndarray:
    """k nearest neighbors of every row, excluding the row itself.

    Exact euclidean distances; ties go to the lower index.
    """
    m = X.shape[0]
    out = np.empty((m, k), dtype=np.int64)
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        d = cdist(X[start:stop], X)
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        out[start:stop] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def neighborhood_ratio(P: np.ndarray, eps: float = DISPERSION_EPS) -> tuple[float, int]:
    C = P - P.mean(axis=0)
    s = np.linalg.svd(C, compute_uv=False)
    lam = s * s / max(P.shape[0] - 1, 1)
    if lam.size == 0 or lam[0] == 0:
        return 0.0, 0
    tol = lam[0] * max(C.shape) * np.finfo(np.float64).eps
    pos = lam[lam > tol]
    return float(pos[1:].sum() / (pos[0] + eps)), int(pos.size)


def local_dispersion_ratio(X, k: int = 30) -> DispersionRatios:
    """Dispersion ratio ``sum(lam[1:]) / (lam[0] + eps)`` of each row's k-NN PCA.

    The k neighbors exclude the row itself and are centered before the
    eigendecomposition.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected an M x D matrix, got shape {X.shape}")
    if k < 2:
        raise SizeError(f"k must be at least 2, got {k}")
    if X.shape[0] <= k:
        raise SizeError(f"need more than k={k} rows, got {X.shape[0]}")
    nbrs = knn_indices(X, k)
    ratio = np.empty(X.shape[0])
    rank = np.empty(X.shape[0], dtype=np.int64)
    for i, idx in enumerate(nbrs):
        ratio[i], rank[i] = neighborhood_ratio(X[idx])
    return DispersionRatios(ratio, rank, k)


# ------------------------------------------------------------- statistics


@dataclass(frozen=True)
class WelchResult:
    statistic: float
    pvalue: float
    df: float


def welch_t(a, b) -> WelchResult:
    """Unequal-variance two-sample t test, two-sided."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise SizeError(f"each sample needs at least 2 values, got {a.size} and {b.size}")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    diff = a.mean() - b.mean()
    if se2 == 0:
        if diff == 0:
            return WelchResult(0.0, 1.0, float(a.size + b.size - 2))
        raise DegenerateInputError("both samples have zero variance and different means")
    t = diff / np.sqrt(se2)
    df = se2 * se2 / (va * va / (a.size - 1) + vb * vb / (b.size - 1))
    p = 2 * stats.t.sf(abs(t), df)
    return WelchResult(float(t), float(min(p, 1.0)), float(df))


def bh_fdr(p_values) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values, in the input order."""
    p = np.asarray(p_values, dtype=np.float64).ravel()
    if p.size == 0:
        return p.copy()
    if np.any(~((p >= 0) & (p <= 1))):
        raise DomainError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adj = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adj, 1.0)
    return out


# --------------------------------------------------------- layer comparison


@dataclass
class LayerTestResult:
    """Per-layer Welch comparison of dispersion ratios between two groups."""

    layers: list[int]
    groups: tuple[str, str]
    mean_a: np.ndarray
    mean_b: np.ndarray
    se_a: np.ndarray
    se_b: np.ndarray
    statistic: np.ndarray
    df: np.ndarray
    p_raw: np.ndarray
    p_adjusted: np.ndarray
    alpha: float = 0.05
    mode: str = "groups"
    partitions: dict = field(default_factory=dict)

    @property
    def significant(self) -> np.ndarray:
        return self.p_adjusted < self.alpha

    @property
    def difference(self) -> np.ndarray:
        return self.mean_a - self.mean_b

    def rows(self):
        for i, layer in enumerate(self.layers):
            yield {
                "layer": layer,
                "mode": self.mode,
                "group_a": self.groups[0],
                "group_b": self.groups[1],
                "mean_a": float(self.mean_a[i]),
                "mean_b": float(self.mean_b[i]),
                "se_a": float(self.se_a[i]),
                "se_b": float(self.se_b[i]),
                "difference": float(self.difference[i]),
                "statistic": float(self.statistic[i]),
                "df": float(self.df[i]),
                "p_raw": float(self.p_raw[i]),
                "p_adjusted": float(self.p_adjusted[i]),
                "significant": bool(self.significant[i]),
            }

    def to_csv(self, path=None) -> str:
        rows = list(self.rows())
        buf = io.StringIO()
        w = csv.DictWriter(buf, list(rows[0]) if rows else ["layer"], lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "groups": list(self.groups),
            "alpha": self.alpha,
            "layers": list(self.rows()),
            "partitions": {str(k): {g: v.tolist() for g, v in parts.items()} for k, parts in self.partitions.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _se(x):
    return x.std(ddof=1) / np.sqrt(x.size)


def _test_layers(ratios: list[np.ndarray], groups: list[tuple[np.ndarray, np.ndarray]], layers, names, alpha,
                 mode, partitions) -> LayerTestResult:
    cols = {k: [] for k in ("ma", "mb", "sa", "sb", "t", "df", "p")}
    for r, (ia, ib) in zip(ratios, groups):
        a, b = r[ia], r[ib]
        w = welch_t(a, b)
        for key, val in zip(cols, (a.mean(), b.mean(), _se(a), _se(b), w.statistic, w.df, w.pvalue)):
            cols[key].append(val)
    arr = {k: np.array(v, dtype=np.float64) for k, v in cols.items()}
    return LayerTestResult(list(layers), tuple(names), arr["ma"], arr["mb"], arr["sa"], arr["sb"], arr["t"], arr["df"],
                           arr["p"], bh_fdr(arr["p"]), alpha, mode, partitions)


def layer_dispersion(reps: list[DiffRepresentation], k: int = 30, workers: int = 1) -> list[np.ndarray]:
    """Per-row dispersion ratio of every layer, neighbors drawn from all rows of that layer."""
    fn = lambda rep: local_dispersion_ratio(rep.vectors, k).ratio  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, reps))
    return [fn(rep) for rep in reps]


def compare_conditions(reps: list[DiffRepresentation], group_a: str = "clean", group_b: str = "poisoned", k: int = 30,
                       alpha: float = 0.05, ratios=None, workers: int = 1) -> LayerTestResult:
    """Welch test of dispersion ratios between two labels, BH-corrected across layers."""
    ratios = ratios if ratios is not None else layer_dispersion(reps, k, workers)
    groups = []
    for rep in reps:
        ia, ib = rep.rows(group_a), rep.rows(group_b)
        if ia.size < 2 or ib.size < 2:
            raise SizeError(f"layer {rep.layer}: {ia.size} {group_a!r} and {ib.size} {group_b!r} rows, need 2 each")
        groups.append((ia, ib))
    return _test_layers(ratios, groups, [r.layer for r in reps], (group_a, group_b), alpha,
                        f"{group_a}_{group_b}", {})


def ablation_partition(labels: np.ndarray, mode: str, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two disjoint, equal-size halves of the rows selected by ``mode``."""
    if mode == "clean_clean" or mode == "poisoned_poisoned":
        pool = np.flatnonzero(labels == mode.split("_")[0])
        half = pool.size // 2
        if half < 2:
            raise SizeError(f"{mode}: {pool.size} rows, need at least 4")
        perm = rng.permutation(pool)[: 2 * half]
        return np.sort(perm[:half]), np.sort(perm[half:])
    if mode == "mixed_mixed":
        clean, pois = np.flatnonzero(labels == "clean"), np.flatnonzero(labels == "poisoned")
        q = min(clean.size, pois.size) // 2
        if q < 1:
            raise SizeError(f"mixed_mixed: {clean.size} clean and {pois.size} poisoned rows, need at least 2 each")
        c, p = rng.permutation(clean)[: 2 * q], rng.permutation(pois)[: 2 * q]
        return np.sort(np.r_[c[:q], p[:q]]), np.sort(np.r_[c[q:], p[q:]])
    raise UsageError(f"unknown ablation mode {mode!r}; expected one of {ABLATION_MODES}")


def split_ablation(reps: list[DiffRepresentation], mode: str, seed: int = 0, k: int = 30, alpha: float = 0.05,
                   ratios=None, workers: int = 1) -> LayerTestResult:
    """Dispersion comparison between two random balanced halves of one pool.

    ``clean_clean`` and ``poisoned_poisoned`` split one label in two;
    ``mixed_mixed`` builds two halves that are each half clean and half
    poisoned. Under these nulls no systematic significance is expected.
    """
    ratios = ratios if ratios is not None else layer_dispersion(reps, k, workers)
    rng = np.random.default_rng(seed)
    groups, parts = [], {}
    for rep in reps:
        ia, ib = ablation_partition(rep.labels, mode, rng)
        groups.append((ia, ib))
        parts[rep.layer] = {"a": ia, "b": ib}
    return _test_layers(ratios, groups, [r.layer for r in reps], ("half_a", "half_b"), alpha, mode, parts)


# ------------------------------------------------------------- cosine


def mean_pairwise_cosine_distance(X) -> float:
    """Mean of ``1 - cos`` over all unordered pairs of distinct rows."""
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    if m < 2:
        raise SizeError(f"need at least 2 rows, got {m}")
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DomainError(f"cosine distance undefined for zero-norm rows at index {zero.tolist()}")
    U = X / norms[:, None]
    s = U.sum(axis=0)
    # sum over ordered pairs i != j of u_i.u_j = |sum u|^2 - sum |u_i|^2
    off = s @ s - np.einsum("ij,ij->", U, U)
    return float(np.clip(1.0 - off / (m * (m - 1)), 0.0, 2.0))


@dataclass(frozen=True)
class CosineBootstrap:
    distances_a: np.ndarray
    distances_b: np.ndarray
    statistic: float
    pvalue: float
    subsample: int
    clamped: bool

    def to_dict(self) -> dict:
        return {
            "distances_a": self.distances_a.tolist(),
            "distances_b": self.distances_b.tolist(),
            "statistic": None if np.isnan(self.statistic) else self.statistic,
            "pvalue": None if np.isnan(self.pvalue) else self.pvalue,
            "subsample": self.subsample,
            "clamped": self.clamped,
        }


def cosine_bootstrap(rows_a, rows_b, subsample: int = 5000, iterations: int = 3, seed: int = 0) -> CosineBootstrap:
    """Bootstrap distributions of mean within-group cosine distance.

    Each iteration draws ``subsample`` rows without replacement from each
    group. If a group is smaller, the subsample is clamped to the smaller
    group size and ``clamped`` is set. The two distributions are compared
    with Welch's test; statistic and p are NaN when the test is undefined
    (fewer than 2 iterations or zero spread in both groups).
    """
    A = np.asarray(rows_a, dtype=np.float64)
    B = np.asarray(rows_b, dtype=np.float64)
    for name, M in (("a", A), ("b", B)):
        zero = np.flatnonzero(np.linalg.norm(M, axis=1) == 0)
        if zero.size:
            raise DomainError(f"group {name}: zero-norm rows at index {zero.tolist()}")
    m = min(subsample, A.shape[0], B.shape[0])
    clamped = m < subsample
    if m < 2:
        raise SizeError(f"need at least 2 rows per group, got {A.shape[0]} and {B.shape[0]}")
    rng = np.random.default_rng(seed)
    da, db = np.empty(iterations), np.empty(iterations)
    for it in range(iterations):
        da[it] = mean_pairwise_cosine_distance(A[rng.choice(A.shape[0], m, replace=False)])
        db[it] = mean_pairwise_cosine_distance(B[rng.choice(B.shape[0], m, replace=False)])
    try:
        w = welch_t(da, db)
        t, p = w.statistic, w.pvalue
    except (SizeError, DegenerateInputError):
        t = p = float("nan")
    return CosineBootstrap(da, db, t, p, m, clamped)


def cosine_comparison(rep: DiffRepresentation, mode: str = "clean_poisoned", subsample: int = 5000,
                      iterations: int = 3, seed: int = 0) -> CosineBootstrap:
    """Cosine bootstrap for one layer: clean vs poisoned, or an ablation split."""
    if mode == "clean_poisoned":
        ia, ib = rep.rows("clean"), rep.rows("poisoned")
    else:
        ia, ib = ablation_partition(rep.labels, mode, np.random.default_rng([seed, 1]))
    return cosine_bootstrap(rep.vectors[ia], rep.vectors[ib], subsample, iterations, seed)
