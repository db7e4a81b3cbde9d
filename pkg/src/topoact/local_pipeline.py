"""Neuron-wise 2D embeddings across layer pairs, layer sweeps and peak matching.

For one input sample and a layer pair (a, b), neuron ``i`` becomes the
point ``(act_a[i], act_b[i])``; the Rips barcode of these D points
describes how the layer-to-layer map deforms the activation pattern.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .data_io import DatasetManifest
from .errors import CoverageError, DegenerateInputError, PeakCountError, SizeError, UsageError
from .features import FEATURE_NAMES, summarize
from .ph import PointCloud, barcode

VARIANTS = ("original", "normalized", "normalized_permuted")
DEFAULT_STATISTICS = (
    "total_persistence_0bars",
    "total_persistence_1bars",
    "mean_death_0bars",
    "mean_birth_1bars",
    "mean_death_1bars",
    "entropy_0bars",
    "entropy_1bars",
)
EXACT_AXIS_LIMIT = 12


@dataclass(frozen=True)
class LayerPairEmbedding:
    points: np.ndarray
    condition: str = ""
    variant: str = "original"
    sample: int = -1
    layers: tuple[int, int] = (-1, -1)

    @property
    def cloud(self) -> PointCloud:
        return PointCloud(self.points)


def pair_embedding(act_a, act_b, **tags) -> LayerPairEmbedding:
    """Pair two activation vectors neuron by neuron into D points in the plane."""
    a = np.asarray(act_a, dtype=np.float64).ravel()
    b = np.asarray(act_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise SizeError(f"activation vectors differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise SizeError(f"need at least 2 neurons, got {a.size}")
    return LayerPairEmbedding(np.column_stack([a, b]), **tags)


def normalize_vector(v) -> np.ndarray:
    """Zero mean, unit population variance across the entries of one vector."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size < 2:
        raise SizeError(f"need at least 2 entries to normalize, got {v.size}")
    sd = v.std()
    if sd == 0:
        raise DegenerateInputError("cannot normalize a constant vector")
    return (v - v.mean()) / sd


def permute_control(embedding: LayerPairEmbedding, seed) -> LayerPairEmbedding:
    """Re-index the second coordinate by a seeded uniform permutation."""
    pts = embedding.points
    perm = np.random.default_rng(seed).permutation(pts.shape[0])
    out = np.column_stack([pts[:, 0], pts[perm, 1]])
    return LayerPairEmbedding(out, embedding.condition, "normalized_permuted", embedding.sample, embedding.layers)


def make_variant(act_a, act_b, variant: str, perm_seed=None, **tags) -> LayerPairEmbedding:
    if variant == "original":
        return pair_embedding(act_a, act_b, variant=variant, **tags)
    if variant not in VARIANTS:
        raise UsageError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    emb = pair_embedding(normalize_vector(act_a), normalize_vector(act_b), variant="normalized", **tags)
    if variant == "normalized_permuted":
        emb = permute_control(emb, perm_seed)
    return emb


# ------------------------------------------------------------- data access


class _ArraySource:
    def __init__(self, data):
        self._data = {}
        for cond, stack in data.items():
            if isinstance(stack, dict):
                self._data[cond] = {int(k): np.asarray(v, dtype=np.float64) for k, v in stack.items()}
            else:
                stack = np.asarray(stack, dtype=np.float64)
                self._data[cond] = {i: stack[i] for i in range(stack.shape[0])}
        self.layers = sorted({layer for layers in self._data.values() for layer in layers})

    def has(self, layer, cond):
        return layer in self._data.get(cond, {})

    def get(self, layer, cond):
        return self._data[cond][layer]


class _ManifestSource:
    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self.layers = sorted(manifest.layers)
        self._cache = {}

    def has(self, layer, cond):
        return cond in self.manifest.files.get(layer, {})

    def get(self, layer, cond):
        key = (layer, cond)
        if key not in self._cache:
            self._cache[key] = self.manifest.load_cloud(layer, cond).points
        return self._cache[key]


def _as_source(dataset):
    if isinstance(dataset, DatasetManifest):
        return _ManifestSource(dataset)
    if isinstance(dataset, dict):
        return _ArraySource(dataset)
    return dataset


# ------------------------------------------------------------------- sweep


@dataclass
class LayerSweep:
    """Per-sample statistics and their summary curves along a layer-pair axis.

    ``values`` has shape (pairs, conditions, variants, n, statistics); the
    curves below reduce over the sample axis.
    """

    pairs: list[tuple[int, int]]
    conditions: tuple[str, str]
    variants: tuple[str, ...]
    statistics: tuple[str, ...]
    sample_ids: np.ndarray
    interval: int
    seed: int
    values: np.ndarray
    mean: np.ndarray = field(init=False)
    pooled_variance: np.ndarray = field(init=False)
    ratio: np.ndarray = field(init=False)
    abs_diff: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mean = self.values.mean(axis=3)  # (pairs, conditions, variants, stats)
        pooled = self.values.transpose(0, 2, 4, 1, 3).reshape(*self.values.shape[:1], self.values.shape[2],
                                                                 self.values.shape[4], -1)
        self.pooled_variance = pooled.var(axis=-1)  # (pairs, variants, stats)
        a, b = self.mean[:, 0], self.mean[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = a / b
        ratio[(a == 0) & (b == 0)] = 1.0
        ratio[(b == 0) & (a != 0)] = np.nan
        self.ratio = ratio
        self.abs_diff = np.abs(a - b)

    @property
    def n(self) -> int:
        return int(self.values.shape[3])

    def _idx(self, variant, statistic):
        return self.variants.index(variant), self.statistics.index(statistic)

    def curve(self, statistic: str, variant: str = "original", kind: str = "ratio", condition: str | None = None):
        v, s = self._idx(variant, statistic)
        if kind == "mean":
            return self.mean[:, self.conditions.index(condition), v, s]
        table = {"ratio": self.ratio, "abs_diff": self.abs_diff, "pooled_variance": self.pooled_variance}
        if kind not in table:
            raise UsageError(f"unknown curve kind {kind!r}")
        return table[kind][:, v, s]

    def samples(self, statistic: str, variant: str, condition: str) -> np.ndarray:
        """(pairs, n) per-sample values of one statistic."""
        v, s = self._idx(variant, statistic)
        return self.values[:, self.conditions.index(condition), v, :, s]

    def rows(self):
        for p, (la, lb) in enumerate(self.pairs):
            for c, cond in enumerate(self.conditions):
                for v, var in enumerate(self.variants):
                    for s, stat in enumerate(self.statistics):
                        yield {
                            "layer_a": la,
                            "layer_b": lb,
                            "condition": cond,
                            "variant": var,
                            "statistic": stat,
                            "n": self.n,
                            "mean": float(self.mean[p, c, v, s]),
                            "pooled_variance": float(self.pooled_variance[p, v, s]),
                            "ratio": float(self.ratio[p, v, s]),
                            "abs_diff": float(self.abs_diff[p, v, s]),
                        }

    def to_csv(self, path=None) -> str:
        cols = ["layer_a", "layer_b", "condition", "variant", "statistic", "n", "mean", "pooled_variance", "ratio",
                "abs_diff"]
        buf = io.StringIO()
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {
            "interval": self.interval,
            "n": self.n,
            "seed": self.seed,
            "pairs": [list(p) for p in self.pairs],
            "conditions": list(self.conditions),
            "variants": list(self.variants),
            "statistics": list(self.statistics),
            "sample_ids": self.sample_ids.tolist(),
            "curves": {
                var: {
                    stat: {
                        "mean": {c: self.curve(stat, var, "mean", c).tolist() for c in self.conditions},
                        "pooled_variance": self.curve(stat, var, "pooled_variance").tolist(),
                        "ratio": [None if np.isnan(x) else x for x in self.curve(stat, var, "ratio").tolist()],
                        "abs_diff": self.curve(stat, var, "abs_diff").tolist(),
                    }
                    for stat in self.statistics
                }
                for var in self.variants
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def embedding_statistics(emb: LayerPairEmbedding, statistics=DEFAULT_STATISTICS) -> np.ndarray:
    summary = summarize(barcode(emb.points))
    return np.array([summary[s] for s in statistics])


def layer_sweep(dataset, interval: int = 1, n: int = 1000, statistics=DEFAULT_STATISTICS, seed: int = 0,
                variants=VARIANTS, conditions=("clean", "poisoned"), layers=None, workers: int = 1) -> LayerSweep:
    """Average barcode statistics of pair embeddings along the layer axis.

    Pairs are ``(layers[i], layers[i + interval])``. One set of ``n``
    sample ids is drawn per sweep and reused for every pair and condition.
    The permutation control for sample ``s`` at pair ``p`` is seeded by
    ``(seed, p, s)``, so two conditions holding identical data produce
    identical statistics.
    """
    src = _as_source(dataset)
    statistics = tuple(statistics)
    variants = tuple(variants)
    conditions = tuple(conditions)
    bad = [s for s in statistics if s not in FEATURE_NAMES]
    if bad:
        raise UsageError(f"unknown statistics {bad}")
    if len(conditions) != 2:
        raise UsageError("a sweep compares exactly two conditions")
    if interval < 1:
        raise UsageError(f"interval must be at least 1, got {interval}")
    layers = sorted(layers) if layers is not None else list(src.layers)
    if interval >= len(layers):
        raise CoverageError(f"interval {interval} leaves no layer pairs among {len(layers)} layers")
    pairs = [(layers[i], layers[i + interval]) for i in range(len(layers) - interval)]
    missing = [f"({a}, {b})/{c}" for a, b in pairs for c in conditions if not (src.has(a, c) and src.has(b, c))]
    if missing:
        raise CoverageError(f"missing layer data for pairs: {', '.join(missing)}")

    n_avail = min(src.get(layer, c).shape[0] for layer in layers for c in conditions)
    if n > n_avail:
        raise SizeError(f"requested n={n} samples but only {n_avail} are available in every layer")
    ids = np.arange(n) if n == n_avail else np.sort(np.random.default_rng(seed).choice(n_avail, n, replace=False))

    jobs = [(p, c, v, j) for p in range(len(pairs)) for c in range(2) for v in range(len(variants)) for j in range(n)]

    def run(job):
        p, c, v, j = job
        (la, lb), s = pairs[p], int(ids[j])
        emb = make_variant(src.get(la, conditions[c])[s], src.get(lb, conditions[c])[s], variants[v],
                           perm_seed=[seed, p, s], sample=s, layers=(la, lb), condition=conditions[c])
        return embedding_statistics(emb, statistics)

    values = np.empty((len(pairs), 2, len(variants), n, len(statistics)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = map(run, jobs)
    for job, res in zip(jobs, results):
        values[job] = res
    return LayerSweep(pairs, conditions, variants, statistics, ids, interval, seed, values)


# ----------------------------------------------------------- peak analysis


def find_peaks(curve) -> np.ndarray:
    """Indices of strict local maxima; endpoints compare with their one neighbor."""
    y = np.asarray(curve, dtype=np.float64)
    if y.size <= 1:
        return np.arange(y.size)
    left = np.r_[True, y[1:] > y[:-1]]
    right = np.r_[y[:-1] > y[1:], True]
    return np.flatnonzero(left & right & np.isfinite(y))


def top_peaks(curve, k: int) -> np.ndarray:
    """The ``k`` peaks with the largest values (ties to the lower index)."""
    y = np.asarray(curve, dtype=np.float64)
    peaks = find_peaks(y)
    if peaks.size < k:
        raise PeakCountError(f"curve has {peaks.size} peaks, fewer than k={k}")
    order = np.argsort(-y[peaks], kind="stable")
    return np.sort(peaks[order[:k]])


@dataclass(frozen=True)
class PeakPrecision:
    k: int
    precision: float
    p_value: float
    overlap: int
    peaks_a: tuple[int, ...]
    peaks_b: tuple[int, ...]
    method: str
    n_permutations: int
    standard_error: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "precision": self.precision,
            "p_value": self.p_value,
            "overlap": self.overlap,
            "peaks_a": list(self.peaks_a),
            "peaks_b": list(self.peaks_b),
            "method": self.method,
            "n_permutations": self.n_permutations,
            "standard_error": self.standard_error,
        }


def _exact_tail(length: int, target: np.ndarray, k: int, observed: int) -> float:
    hits = total = 0
    tset = set(target.tolist())
    for subset in itertools.combinations(range(length), k):
        total += 1
        hits += len(tset.intersection(subset)) >= observed
    return hits / total


def peak_precision_at_k(curve_a, curve_b, k: int, n_permutations: int = 10000, seed: int = 0,
                        method: str = "auto") -> PeakPrecision:
    """Overlap of the top-k peaks of two curves on a shared axis.

    ``precision = |peaks_a & peaks_b| / k``. The null replaces ``peaks_a``
    by a uniformly random k-subset of the axis; the p-value is the null
    probability of an overlap at least as large as observed. ``method``
    is ``"exact"`` (enumerate all subsets), ``"monte_carlo"`` (add-one
    smoothed, ``(1 + hits) / (1 + n_permutations)``) or ``"auto"`` (exact
    when the axis has at most 12 positions).
    """
    a = np.asarray(curve_a, dtype=np.float64)
    b = np.asarray(curve_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise SizeError(f"curves must share one axis, got shapes {a.shape} and {b.shape}")
    if k < 1:
        raise UsageError(f"k must be positive, got {k}")
    pa, pb = top_peaks(a, k), top_peaks(b, k)
    observed = len(np.intersect1d(pa, pb))
    length = a.size
    if method == "auto":
        method = "exact" if length <= EXACT_AXIS_LIMIT else "monte_carlo"
    if method == "exact":
        p = _exact_tail(length, pb, k, observed)
        se = 0.0
        n_perm = comb(length, k)
    elif method == "monte_carlo":
        rng = np.random.default_rng(seed)
        in_b = np.zeros(length, dtype=bool)
        in_b[pb] = True
        # argsort of uniform keys gives a uniform k-subset per row
        draws = np.argsort(rng.random((n_permutations, length)), axis=1)[:, :k]
        hits = int(np.count_nonzero(in_b[draws].sum(axis=1) >= observed))
        p = (1 + hits) / (1 + n_permutations)
        se = float(np.sqrt(p * (1 - p) / n_permutations))
        n_perm = n_permutations
    else:
        raise UsageError(f"unknown method {method!r}")
    return PeakPrecision(k, observed / k, float(p), observed, tuple(pa.tolist()), tuple(pb.tolist()), method,
                         int(n_perm), se)


def peak_table(sweep: LayerSweep, ks=(1, 3, 5), n_permutations: int = 10000, seed: int = 0,
               statistics=None, variants=None) -> list[dict]:
    """p@k of pooled-variance peaks against absolute-difference peaks.

    One row per (statistic, variant, k). Curves with too few peaks get a
    row with ``status`` describing the shortfall instead of a value.
    """
    rows = []
    for stat in statistics or sweep.statistics:
        for var in variants or sweep.variants:
            var_curve = sweep.curve(stat, var, "pooled_variance")
            diff_curve = sweep.curve(stat, var, "abs_diff")
            for k in ks:
                row = {"statistic": stat, "variant": var, "k": k}
                try:
                    res = peak_precision_at_k(var_curve, diff_curve, k, n_permutations, seed)
                except PeakCountError as exc:
                    row.update(precision=None, p_value=None, method=None, status=str(exc))
                else:
                    row.update(precision=res.precision, p_value=res.p_value, method=res.method, status="ok",
                               peaks_variance=list(res.peaks_a), peaks_abs_diff=list(res.peaks_b))
                rows.append(row)
    return rows


def peak_table_csv(rows: list[dict], path=None) -> str:
    cols = ["statistic", "variant", "k", "precision", "p_value", "method", "status"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({c: "" if row.get(c) is None else row.get(c) for c in cols})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
