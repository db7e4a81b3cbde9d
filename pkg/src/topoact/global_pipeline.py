"""Layer-wise analysis of barcode summaries.

Correlation pruning, PCA, CCA loadings, L2-regularized logistic regression
and exact Shapley values of the linear model, plus the end-to-end driver
that turns two activation clouds into a :class:`GlobalReport`.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats
from sklearn.model_selection import StratifiedKFold, train_test_split

from .errors import DomainError, SizeError, StratificationError
from .features import FEATURE_NAMES, BarcodeSummary, summarize
from .ph import PointCloud, barcode, subsample

DEFAULT_PRIORITY = ("mean_death_0bars",) + tuple(n for n in FEATURE_NAMES if n != "mean_death_0bars")
CCA_RIDGE = 1e-8


@dataclass
class SummaryTable:
    """Rows of barcode summaries with binary labels (0 normal, 1 adversarial)."""

    X: np.ndarray
    labels: np.ndarray
    names: tuple[str, ...] = FEATURE_NAMES
    layer: object = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.names = tuple(self.names)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.names):
            raise SizeError(f"table has shape {self.X.shape} but {len(self.names)} names")
        if self.labels.shape != (self.X.shape[0],):
            raise SizeError("one label per row required")

    @classmethod
    def from_summaries(cls, normal: list[BarcodeSummary], adversarial: list[BarcodeSummary], layer=None):
        rows = [s.values for s in normal] + [s.values for s in adversarial]
        labels = [0] * len(normal) + [1] * len(adversarial)
        return cls(np.vstack(rows), np.array(labels), FEATURE_NAMES, layer)

    def select(self, names) -> "SummaryTable":
        idx = [self.names.index(n) for n in names]
        return SummaryTable(self.X[:, idx], self.labels, tuple(names), self.layer)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]


def _standardize(X):
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    if np.any(scale == 0):
        bad = np.flatnonzero(scale == 0).tolist()
        raise DomainError(f"zero-variance column(s) {bad} cannot be standardized")
    return (X - mean) / scale, mean, scale


# ---------------------------------------------------------------- pruning


@dataclass
class PruneResult:
    kept: tuple[str, ...]
    constant: tuple[str, ...]
    correlation: np.ndarray  # full Pearson matrix, NaN where a column is constant
    names: tuple[str, ...]
    threshold: float


def correlation_prune(table: SummaryTable, threshold: float = 0.5, priority=None) -> PruneResult:
    """Greedy removal of correlated features.

    Walks ``priority`` and keeps a feature only if its absolute Pearson
    correlation with every feature kept so far is at most ``threshold``.
    Constant columns are dropped before the sweep.
    """
    if not 0 < threshold <= 1:
        raise DomainError(f"prune threshold must lie in (0, 1], got {threshold}")
    if table.X.shape[0] < 2:
        raise SizeError("correlation pruning needs at least 2 rows")
    priority = tuple(priority) if priority is not None else DEFAULT_PRIORITY
    order = [n for n in priority if n in table.names] + [n for n in table.names if n not in priority]

    X = table.X
    constant_mask = np.ptp(X, axis=0) == 0
    corr = np.full((X.shape[1], X.shape[1]), np.nan)
    live = np.flatnonzero(~constant_mask)
    if live.size:
        corr[np.ix_(live, live)] = np.atleast_2d(np.corrcoef(X[:, live], rowvar=False))

    kept: list[int] = []
    for name in order:
        j = table.names.index(name)
        if constant_mask[j]:
            continue
        if all(abs(corr[j, i]) <= threshold for i in kept):
            kept.append(j)
    return PruneResult(
        kept=tuple(table.names[j] for j in kept),
        constant=tuple(n for n, c in zip(table.names, constant_mask) if c),
        correlation=corr,
        names=table.names,
        threshold=threshold,
    )


# -------------------------------------------------------------------- PCA


@dataclass
class PCAResult:
    loadings: np.ndarray  # (n_components, n_features)
    scores: np.ndarray  # (n_rows, n_components)
    explained_variance_ratio: np.ndarray
    mean: np.ndarray
    scale: np.ndarray


def pca(X, n_components: int = 2, standardize: bool = True) -> PCAResult:
    """Principal components via SVD of the (standardized) data.

    Components are sorted by decreasing variance; each is signed so that its
    largest-magnitude loading is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if n_components > X.shape[1]:
        raise SizeError(f"n_components={n_components} exceeds {X.shape[1]} features")
    if standardize:
        Z, mean, scale = _standardize(X)
    else:
        mean = X.mean(axis=0)
        scale = np.ones(X.shape[1])
        Z = X - mean
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    var = s**2
    ratio = var / var.sum()
    comps = vt[:n_components].copy()
    for c in comps:
        if c[np.argmax(np.abs(c))] < 0:
            c *= -1
    return PCAResult(comps, Z @ comps.T, ratio[:n_components], mean, scale)


# -------------------------------------------------------------------- CCA


@dataclass
class CCAResult:
    correlations: np.ndarray
    x_loadings: np.ndarray  # (p, r): corr(feature_j, canonical variate k of X)
    y_loadings: np.ndarray  # (q, r)
    regularized: bool

    @property
    def first_loadings(self) -> np.ndarray:
        return self.x_loadings[:, 0]


def _inv_sqrt(C):
    w, v = np.linalg.eigh(C)
    return (v / np.sqrt(w)) @ v.T


def cca_loadings(X, Y) -> CCAResult:
    """Canonical correlation analysis with structure-correlation loadings.

    Both blocks are standardized. When either covariance block is rank
    deficient, ``1e-8 * I`` is added to both and ``regularized`` is set.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64).T).T
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64).T).T
    if X.shape[0] != Y.shape[0]:
        raise SizeError("CCA blocks must be row-aligned")
    Zx, _, _ = _standardize(X)
    Zy, _, _ = _standardize(Y)
    m = X.shape[0]
    if X.shape[1] == 1 and Y.shape[1] == 1:
        r = float(Zx[:, 0] @ Zy[:, 0] / m)
        return CCAResult(np.array([abs(r)]), np.array([[1.0]]), np.array([[r]]), False)

    cxx = Zx.T @ Zx / m
    cyy = Zy.T @ Zy / m
    cxy = Zx.T @ Zy / m
    regularized = np.linalg.matrix_rank(cxx) < cxx.shape[0] or np.linalg.matrix_rank(cyy) < cyy.shape[0]
    if regularized:
        warnings.warn("rank-deficient CCA block; adding ridge 1e-8", RuntimeWarning, stacklevel=2)
        cxx = cxx + CCA_RIDGE * np.eye(cxx.shape[0])
        cyy = cyy + CCA_RIDGE * np.eye(cyy.shape[0])
    wx = _inv_sqrt(cxx)
    wy = _inv_sqrt(cyy)
    u, s, _ = np.linalg.svd(wx @ cxy @ wy, full_matrices=False)
    a = wx @ u  # canonical weights, unit-variance variates
    xl = cxx @ a
    yl = cxy.T @ a
    for k in range(xl.shape[1]):
        if xl[np.argmax(np.abs(xl[:, k])), k] < 0:
            xl[:, k] *= -1
            yl[:, k] *= -1
    return CCAResult(np.clip(s, 0.0, 1.0), xl, yl, bool(regularized))


# --------------------------------------------------------------- logistic


@dataclass
class LogisticModel:
    """Linear logit ``((x - center) / scale) @ weights + intercept``."""

    weights: np.ndarray
    intercept: float
    center: np.ndarray
    scale: np.ndarray
    l2: float
    converged: bool = True

    def decision_function(self, X) -> np.ndarray:
        return ((np.asarray(X, dtype=np.float64) - self.center) / self.scale) @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.decision_function(X)))

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)

    @property
    def raw_weights(self) -> np.ndarray:
        return self.weights / self.scale


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def train_logistic(X, y, l2: float = 1.0, standardize: bool = True, max_iter: int = 100, tol: float = 1e-12) -> LogisticModel:
    """Newton's method on mean log-loss + (l2 / 2) * ||w||^2.

    The intercept is not penalized. Using the mean (not the sum) of the
    per-row losses makes the optimum invariant to duplicating rows.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if standardize:
        Z, center, scale = _standardize(X)
    else:
        Z, center, scale = X, np.zeros(X.shape[1]), np.ones(X.shape[1])
    m, p = Z.shape
    A = np.column_stack([Z, np.ones(m)])
    penalty = np.full(p + 1, l2)
    penalty[-1] = 0.0
    theta = np.zeros(p + 1)

    def objective(t):
        z = A @ t
        return np.mean(_log1pexp(z) - y * z) + 0.5 * np.sum(penalty * t * t)

    f = objective(theta)
    converged = False
    for _ in range(max_iter):
        prob = 1.0 / (1.0 + np.exp(-(A @ theta)))
        grad = A.T @ (prob - y) / m + penalty * theta
        hess = (A * (prob * (1 - prob))[:, None]).T @ A / m + np.diag(penalty)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta - t * step
            fc = objective(cand)
            if fc <= f + 1e-4 * t * (grad @ -step) or t < 1e-10:
                break
            t *= 0.5
        theta, f_old, f = cand, f, fc
        if np.max(np.abs(t * step)) < tol or abs(f_old - f) < tol * 1e-3:
            converged = True
            break
    if not converged:
        warnings.warn("logistic regression did not converge (separable data without regularization?)", RuntimeWarning, stacklevel=2)
    return LogisticModel(theta[:-1], float(theta[-1]), center, scale, l2, converged)


def auc_rank(y_true, score) -> float:
    """ROC AUC as the normalized Mann-Whitney U statistic (ties count 1/2)."""
    y_true = np.asarray(y_true)
    ranks = stats.rankdata(score)
    pos = y_true == 1
    n1, n0 = pos.sum(), (~pos).sum()
    if n1 == 0 or n0 == 0:
        raise StratificationError("AUC requires both classes")
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


@dataclass
class RegressionRecord:
    model: LogisticModel
    feature_names: tuple[str, ...]
    train_index: np.ndarray
    test_index: np.ndarray
    accuracy: float
    auc_roc: float
    cv_scores: np.ndarray
    seed: int

    def to_dict(self) -> dict:
        return {
            "features": list(self.feature_names),
            "weights": self.model.weights.tolist(),
            "intercept": self.model.intercept,
            "center": self.model.center.tolist(),
            "scale": self.model.scale.tolist(),
            "l2": self.model.l2,
            "train_index": self.train_index.tolist(),
            "test_index": self.test_index.tolist(),
            "accuracy": self.accuracy,
            "auc_roc": self.auc_roc,
            "cv_scores": self.cv_scores.tolist(),
            "seed": self.seed,
        }


def _check_classes(labels, need: int, what: str):
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=2)
    if counts.size != 2 or counts.min() < need:
        raise StratificationError(f"{what} needs at least {need} rows of each class, got counts {counts.tolist()}")


def fit_logistic(table: SummaryTable, split_seed: int = 0, test_size: float = 0.3, n_folds: int = 5, l2: float = 1.0) -> RegressionRecord:
    """Stratified train/test split, fit, and stratified k-fold CV on the train part.

    Standardization statistics come from the training rows only.
    """
    y = table.labels
    _check_classes(y, max(2, n_folds), "stratified split")
    idx = np.arange(y.size)
    train, test = train_test_split(idx, test_size=test_size, stratify=y, random_state=split_seed)
    train, test = np.sort(train), np.sort(test)
    _check_classes(y[train], n_folds, "cross-validation")
    _check_classes(y[test], 1, "test split")
    model = train_logistic(table.X[train], y[train], l2=l2)
    score = model.decision_function(table.X[test])
    accuracy = float(np.mean((score > 0) == (y[test] == 1)))
    auc = auc_rank(y[test], score)

    cv = []
    folds = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=split_seed)
    for fit_idx, val_idx in folds.split(table.X[train], y[train]):
        fold_model = train_logistic(table.X[train][fit_idx], y[train][fit_idx], l2=l2)
        cv.append(np.mean(fold_model.predict(table.X[train][val_idx]) == y[train][val_idx]))
    return RegressionRecord(model, table.names, train, test, accuracy, auc, np.array(cv, dtype=float), split_seed)


# ------------------------------------------------------------------- SHAP


@dataclass
class ShapResult:
    values: np.ndarray  # (rows, features), logit units
    base_value: float
    feature_names: tuple[str, ...]
    feature_values: np.ndarray
    logits: np.ndarray

    def ranking(self) -> list[str]:
        """Features ordered by decreasing mean |attribution| (stable)."""
        importance = np.abs(self.values).mean(axis=0)
        order = np.argsort(-importance, kind="stable")
        return [self.feature_names[i] for i in order]

    def to_csv(self, path=None) -> str:
        """Long-format beeswarm table, features in importance order."""
        lines = ["feature,rank,row,shap_value,feature_value"]
        for r, name in enumerate(self.ranking()):
            j = self.feature_names.index(name)
            for i in range(self.values.shape[0]):
                lines.append(f"{name},{r},{i},{self.values[i, j]!r},{self.feature_values[i, j]!r}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def linear_shap(model: LogisticModel, rows, background_means, feature_names=None) -> ShapResult:
    """Exact Shapley values of a linear logit with an independent background.

    Attribution of feature j on row x is ``w_j * (x_j - mean_j)`` with ``w``
    the raw-scale weights; the base value is the logit at the background.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    background_means = np.asarray(background_means, dtype=np.float64)
    w = model.raw_weights
    values = (rows - background_means) * w
    base = float(model.decision_function(background_means[None, :])[0])
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(rows.shape[1]))
    return ShapResult(values, base, names, rows, model.decision_function(rows))


# ---------------------------------------------------------- budget check


@dataclass
class BudgetCheck:
    standard_errors: np.ndarray
    passed: np.ndarray
    limit: float
    n_subsamples: int


def subsample_budget_check(values, target: float = 0.05, names=None) -> BudgetCheck:
    """Monte-Carlo standard error of each feature across K subsamples.

    ``values`` is (K, F). A feature passes when ``std / sqrt(K)`` (sample
    standard deviation) is below ``target / 2``.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    k = values.shape[0]
    if k < 2:
        raise SizeError(f"standard error needs K >= 2 subsamples, got {k}")
    se = values.std(axis=0, ddof=1) / np.sqrt(k)
    return BudgetCheck(se, se < target / 2, target / 2, k)


# ---------------------------------------------------------------- driver


def summarize_subsamples(cloud: PointCloud, K: int, k: int, seed: int, label: str = "", layer=None,
                         metric: str = "euclidean", threshold="auto", count_infinite_h0: bool = False,
                         workers: int = 1) -> list[BarcodeSummary]:
    """Barcode summaries of K independent size-k subsamples of a cloud."""
    seeds = np.random.SeedSequence(seed).generate_state(K).tolist()

    def one(i):
        sub = subsample(cloud, k, seeds[i])
        bc = barcode(sub.points, metric=metric, threshold=threshold)
        return summarize(bc, count_infinite_h0, {"subsample": i, "seed": seeds[i], "layer": layer, "condition": label})

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, range(K)))
    return [one(i) for i in range(K)]


@dataclass
class GlobalReport:
    layer: object
    config: dict
    table: SummaryTable
    prune: PruneResult
    pca: PCAResult
    cca: CCAResult
    regression: RegressionRecord
    shap: ShapResult
    summaries: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "config": self.config,
            "n_rows": int(self.table.X.shape[0]),
            "kept_features": list(self.prune.kept),
            "constant_features": list(self.prune.constant),
            "correlation": {
                "names": list(self.prune.names),
                "matrix": [[None if np.isnan(v) else float(v) for v in row] for row in self.prune.correlation],
            },
            "pca": {
                "loadings": self.pca.loadings.tolist(),
                "explained_variance_ratio": self.pca.explained_variance_ratio.tolist(),
            },
            "cca": {
                "correlations": self.cca.correlations.tolist(),
                "loadings": self.cca.x_loadings.tolist(),
                "regularized": self.cca.regularized,
            },
            "regression": self.regression.to_dict(),
            "shap": {"base_value": self.shap.base_value, "ranking": self.shap.ranking()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, outdir) -> list[Path]:
        """JSON report plus PCA-score, CCA-loading and SHAP CSVs."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        stem = f"layer_{self.layer}"
        paths = [outdir / f"{stem}_report.json", outdir / f"{stem}_pca_scores.csv",
                 outdir / f"{stem}_cca_loadings.csv", outdir / f"{stem}_shap.csv"]
        paths[0].write_text(self.to_json())
        with open(paths[1], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "label"] + [f"pc{i + 1}" for i in range(self.pca.scores.shape[1])])
            for i, (lab, sc) in enumerate(zip(self.table.labels, self.pca.scores)):
                w.writerow([i, int(lab)] + [repr(float(v)) for v in sc])
        with open(paths[2], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature"] + [f"cv{i + 1}" for i in range(self.cca.x_loadings.shape[1])])
            for name, row in zip(self.prune.kept, self.cca.x_loadings):
                w.writerow([name] + [repr(float(v)) for v in row])
        self.shap.to_csv(paths[3])
        return paths


def analyze_table(table: SummaryTable, prune_threshold: float = 0.5, n_components: int = 2, seed: int = 0,
                  l2: float = 1.0, test_size: float = 0.3, n_folds: int = 5, priority=None, config=None) -> GlobalReport:
    """Pruning, PCA, CCA, logistic regression and SHAP on one layer's table."""
    pr = correlation_prune(table, prune_threshold, priority)
    if not pr.kept:
        raise DomainError("every feature is constant; nothing to analyze")
    pruned = table.select(pr.kept)
    n_comp = min(n_components, len(pr.kept))
    p = pca(pruned.X, n_comp)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        c = cca_loadings(pruned.X, p.scores)
    reg = fit_logistic(pruned, seed, test_size, n_folds, l2)
    background = pruned.X[reg.train_index].mean(axis=0)
    sh = linear_shap(reg.model, pruned.X, background, pr.kept)
    cfg = dict(config or {})
    cfg.update(prune_threshold=prune_threshold, n_components=n_comp, seed=seed, l2=l2, test_size=test_size, n_folds=n_folds)
    return GlobalReport(table.layer, cfg, table, pr, p, c, reg, sh)


def run_global(normal: PointCloud, adversarial: PointCloud, K: int = 64, k: int = 4096, seed: int = 0,
               layer=None, metric: str = "euclidean", threshold="auto", count_infinite_h0: bool = False,
               workers: int = 1, **analysis) -> GlobalReport:
    """Subsample both clouds, summarize their barcodes and analyze the table."""
    s_norm, s_adv = np.random.SeedSequence(seed).generate_state(2).tolist()
    normal_rows = summarize_subsamples(normal, K, k, s_norm, "normal", layer, metric, threshold, count_infinite_h0, workers)
    adv_rows = summarize_subsamples(adversarial, K, k, s_adv, "adversarial", layer, metric, threshold, count_infinite_h0, workers)
    table = SummaryTable.from_summaries(normal_rows, adv_rows, layer)
    config = {"K": K, "k": k, "metric": metric, "threshold": threshold, "count_infinite_h0": count_infinite_h0}
    report = analyze_table(table, seed=seed, config=config, **analysis)
    report.summaries = normal_rows + adv_rows
    return report
