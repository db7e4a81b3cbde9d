"""Numbered acceptance criteria.

Each test carries an ``acceptance`` marker; the conftest hook prints one
PASS/FAIL line per criterion at the end of the session. Timings are taken
after the JIT warm-up done in conftest.
"""

import math
import time

import numpy as np
import pytest

from oracles import kruskal_weights, naive_rips_barcode
from topoact.cli import REPORT_NAME, main
from topoact.data_io import gen_condition_surrogate, gen_layer_stack, gen_regular_ngon, gen_two_circles
from topoact.dispersion import bh_fdr, local_dispersion_ratio, welch_t
from topoact.features import FEATURE_NAMES, persistent_entropy, summarize
from topoact.global_pipeline import (SummaryTable, correlation_prune, linear_shap, run_global,
                                     subsample_budget_check, train_logistic)
from topoact.local_pipeline import DEFAULT_STATISTICS, EXACT_AXIS_LIMIT, find_peaks, layer_sweep, peak_precision_at_k
from topoact.ph import barcode, distance_matrix, rips_persistence


def acceptance(number, title):
    return pytest.mark.acceptance(number, title)


def _pairs(bc, dim):
    return sorted(map(tuple, bc.bars(dim).tolist()))


@acceptance(1, "dim-0 deaths equal Kruskal MST weights")
def test_dim0_oracle(record_property):
    rng = np.random.default_rng(2024)
    clouds = [rng.standard_normal((int(rng.integers(2, 201)), int(rng.integers(1, 17)))) for _ in range(100)]
    elapsed, mismatches = 0.0, 0
    for pts in clouds:
        t0 = time.perf_counter()
        deaths = barcode(pts, max_dim=0).finite(0)[:, 1]
        elapsed += time.perf_counter() - t0
        mismatches += np.sort(deaths).tolist() != kruskal_weights(distance_matrix(pts).entries)
    record_property("detail", f"{mismatches} mismatches, {elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 10


@acceptance(2, "dim-1 barcode equals naive full reduction")
def test_dim1_oracle(record_property):
    rng = np.random.default_rng(7)
    elapsed, mismatches = 0.0, 0
    for i in range(100):
        pts = rng.random((int(rng.integers(3, 31)), int(rng.integers(1, 5))))
        if i % 4 == 0:
            pts = np.round(pts * 4) / 4  # tied distances and duplicates
        d = distance_matrix(pts).entries
        t0 = time.perf_counter()
        bc = rips_persistence(d, threshold=np.inf)
        elapsed += time.perf_counter() - t0
        h0, h1 = naive_rips_barcode(d)
        mismatches += (_pairs(bc, 0), _pairs(bc, 1)) != (h0, h1)
    record_property("detail", f"{mismatches} mismatches, {elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 60


@acceptance(3, "fixture exactness")
class TestFixtures:
    def test_unit_square(self):
        h1 = barcode(gen_regular_ngon(4, math.sqrt(0.5)).points).bars(1)
        assert h1.shape == (1, 2)
        assert abs(h1[0, 0] - 1) < 1e-12 and abs(h1[0, 1] - math.sqrt(2)) < 1e-12

    def test_triangle(self):
        assert barcode(gen_regular_ngon(3).points).bars(1).shape[0] == 0

    def test_two_16gons(self, record_property):
        h1 = barcode(gen_two_circles(32, 0.0, 0).points).bars(1)
        pers = h1[:, 1] - h1[:, 0]
        record_property("detail", f"16-gon persistences {pers.tolist()}")
        assert h1.shape[0] == 2
        assert abs(pers[0] - pers[1]) < 1e-9


@acceptance(4, "two noisy circles give two dominant loops")
def test_two_circles(record_property):
    pts = gen_two_circles(50, 0.05, seed=0).points
    t0 = time.perf_counter()
    h1 = barcode(pts).bars(1)
    elapsed = time.perf_counter() - t0
    pers = np.sort(h1[:, 1] - h1[:, 0])[::-1]
    third = pers[2] if pers.size > 2 else 0.0
    record_property("detail", f"top persistences {pers[:3].round(4).tolist()}, {elapsed * 1e3:.1f}ms")
    assert pers.size >= 2 and pers[1] > 5 * third
    assert elapsed < 1


@acceptance(5, "persistent entropy")
class TestEntropy:
    @pytest.mark.parametrize("n", [2, 4, 16, 256])
    def test_equal_bars(self, n):
        assert abs(persistent_entropy(np.full(n, 0.37)) - math.log(n)) < 1e-6

    def test_single_bar(self):
        assert abs(persistent_entropy([2.5])) < 1e-9

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        bc = barcode(rng.random((60, 2)))
        for dim in (0, 1):
            bars = bc.finite(dim)
            lengths = bars[:, 1] - bars[:, 0]
            lengths = lengths[lengths > 0]
            base = persistent_entropy(lengths)
            for c in np.geomspace(1e-3, 1e3, 13):
                assert abs(persistent_entropy(c * lengths) - base) < 1e-9


@acceptance(6, "41-component summary in fixed order")
class TestSummaryShape:
    def test_components(self):
        rng = np.random.default_rng(1)
        for pts in (rng.random((40, 3)), gen_two_circles(50).points, np.zeros((1, 2))):
            s = summarize(barcode(pts))
            assert s.values.shape == (41,)
            assert tuple(s.as_dict()) == FEATURE_NAMES

    def test_empty_dim1_zeros(self):
        s = summarize(barcode(gen_regular_ngon(3).points))
        dim1 = [n for n in FEATURE_NAMES if n.endswith("_1bars")]
        assert len(dim1) == 7 * 4 + 3
        assert all(s[n] == 0.0 for n in dim1)


@acceptance(7, "global pipeline separates surrogates, null AUC near chance")
class TestGlobalSurrogate:
    def test_separated(self, record_property):
        t0 = time.perf_counter()
        accs, aucs = [], []
        for seed in range(5):
            g = gen_condition_surrogate(seed=seed)
            rep = run_global(g["clean"], g["poisoned"], K=32, k=256, seed=seed)
            accs.append(rep.regression.accuracy)
            aucs.append(rep.regression.auc_roc)
        record_property("detail", f"min acc {min(accs):.3f}, min AUC {min(aucs):.3f}, "
                                  f"{time.perf_counter() - t0:.0f}s")
        assert min(accs) >= 0.95 and min(aucs) >= 0.95

    def test_identical_families(self, record_property):
        # a finite cloud's own cluster proportions are shared by all of its
        # subsamples, so the null clouds are drawn large; AUC on ~20 test rows
        # is noisy per seed, so the criterion is read on the 5-seed mean
        t0 = time.perf_counter()
        aucs = []
        for seed in range(5):
            g = gen_condition_surrogate(100_000, spread_clean=1.0, spread_poisoned=1.0, seed=seed,
                                        clusters_clean=3, clusters_poisoned=3)
            aucs.append(run_global(g["clean"], g["poisoned"], K=32, k=256, seed=seed).regression.auc_roc)
        record_property("detail", f"null AUCs {np.round(aucs, 3).tolist()}, mean {np.mean(aucs):.3f}, "
                                  f"{time.perf_counter() - t0:.0f}s")
        assert 0.4 <= np.mean(aucs) <= 0.6


@acceptance(8, "SHAP additivity")
class TestShapAdditivity:
    def test_random_models(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            X = rng.standard_normal((80, 6)) * rng.uniform(0.1, 10, 6)
            y = (X[:, 0] + rng.standard_normal(80) > 0).astype(int)
            m = train_logistic(X, y)
            res = linear_shap(m, X, X.mean(0))
            assert np.max(np.abs(res.base_value + res.values.sum(axis=1) - m.decision_function(X))) < 1e-9

    def test_pipeline_report(self):
        g = gen_condition_surrogate(2000, 8, seed=3)
        shap = run_global(g["clean"], g["poisoned"], K=16, k=128, seed=3).shap
        assert np.max(np.abs(shap.base_value + shap.values.sum(axis=1) - shap.logits)) < 1e-9


@acceptance(9, "correlation pruning")
class TestPruning:
    def test_threshold_and_determinism(self):
        rng = np.random.default_rng(0)
        for seed in range(20):
            base = rng.standard_normal((40, 4))
            X = np.column_stack([base, base @ rng.standard_normal((4, 8)) + 0.2 * rng.standard_normal((40, 8))])
            t = SummaryTable(X, np.zeros(40, dtype=int), tuple(f"f{j}" for j in range(12)))
            res = correlation_prune(t, 0.5)
            assert correlation_prune(t, 0.5).kept == res.kept
            idx = [t.names.index(n) for n in res.kept]
            sub = np.abs(res.correlation[np.ix_(idx, idx)])
            assert np.all(sub[~np.eye(len(idx), dtype=bool)] <= 0.5)

    def test_duplicates_collapse(self):
        a = np.random.default_rng(1).standard_normal(30)
        X = np.column_stack([a, 3 * a - 2, -a])
        t = SummaryTable(X, np.zeros(30, dtype=int), ("x", "y", "z"))
        assert correlation_prune(t, 0.5, priority=("z", "x", "y")).kept == ("z",)
        assert correlation_prune(t, 0.5, priority=("y", "z", "x")).kept == ("y",)


@acceptance(10, "local pipeline control and loop injection")
class TestLocalControl:
    def test_permuted_control_iid(self, record_property):
        t0 = time.perf_counter()
        data = {"clean": gen_layer_stack(200, 2, 512, seed=0), "poisoned": gen_layer_stack(200, 2, 512, seed=1)}
        sw = layer_sweep(data, 1, 200, statistics=DEFAULT_STATISTICS, variants=("normalized_permuted",))
        ratios = {s: float(sw.curve(s, "normalized_permuted", "ratio")[0]) for s in DEFAULT_STATISTICS}
        worst = max(ratios, key=lambda s: abs(ratios[s] - 1))
        record_property("detail", f"permuted ratios in [{min(ratios.values()):.3f}, {max(ratios.values()):.3f}] "
                                  f"(worst {worst}), {time.perf_counter() - t0:.0f}s")
        assert all(0.95 <= r <= 1.05 for r in ratios.values())

    def test_loop_injection(self, record_property):
        t0 = time.perf_counter()
        data = {"clean": gen_layer_stack(200, 2, 512, seed=0),
                "poisoned": gen_layer_stack(200, 2, 512, seed=1, loop_pairs=[0])}
        sw = layer_sweep(data, 1, 200, statistics=("total_persistence_1bars",), variants=("original",))
        ratio = float(sw.curve("total_persistence_1bars", "original", "ratio")[0])
        record_property("detail", f"loop pair original ratio {ratio:.3f}, {time.perf_counter() - t0:.0f}s")
        assert not 0.8 <= ratio <= 1.25


@acceptance(11, "p@k estimator")
class TestPeakPrecision:
    @pytest.mark.parametrize("L,k", [(6, 1), (9, 2), (12, 3), (12, 1)])
    def test_monte_carlo_vs_exact(self, L, k):
        assert L <= EXACT_AXIS_LIMIT
        rng = np.random.default_rng(L * 10 + k)
        while True:
            a, b = rng.random(L), rng.random(L)
            if min(find_peaks(a).size, find_peaks(b).size) >= k:
                break
        exact = peak_precision_at_k(a, b, k, method="exact")
        mc = peak_precision_at_k(a, b, k, n_permutations=10_000, seed=L, method="monte_carlo")
        assert mc.precision == exact.precision
        assert abs(mc.p_value - exact.p_value) <= 3 * mc.standard_error

    def test_identical(self):
        y = np.sin(np.arange(20) * 1.3)
        assert all(peak_precision_at_k(y, y, k).precision == 1.0 for k in (1, 3, 5))

    def test_disjoint(self):
        a = np.array([5, 0, 4, 0, 3, 0, 0, 0, 0, 0, 0, 0.0])
        assert peak_precision_at_k(a, a[::-1], 3).precision == 0.0


@acceptance(12, "statistics kernels")
class TestKernels:
    def test_welch(self):
        res = welch_t([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert abs(res.statistic + 1.0) < 1e-3 and abs(res.pvalue - 0.3466) < 1e-3

    def test_bh(self):
        assert bh_fdr([0.01, 0.02, 0.03]).tolist() == [0.03, 0.03, 0.03]

    def test_collinear_dispersion(self):
        rng = np.random.default_rng(0)
        t = rng.uniform(-5, 5, (200, 1))
        X = t * rng.standard_normal((1, 16)) + rng.standard_normal(16)
        assert np.max(local_dispersion_ratio(X, 30).ratio) < 1e-6


@acceptance(13, "subsample budget standard error")
def test_budget(record_property):
    z = np.random.default_rng(0).standard_normal(20)
    v = 0.1 * (z - z.mean()) / z.std(ddof=1)
    res = subsample_budget_check(v, 0.05)
    record_property("detail", f"SE {res.standard_errors[0]:.6f} vs limit {res.limit}")
    assert abs(res.standard_errors[0] - 0.02236) < 1e-5
    assert res.passed[0] and res.limit == 0.025


@pytest.fixture(scope="module")
def datasets(tmp_path_factory):
    root = tmp_path_factory.mktemp("acc14")
    assert main(["generate", "layer-stack", "--n-samples", "12", "--layers", "6", "--dim", "24",
                 "--loop-pairs", "2", "--out", str(root / "stack")]) == 0
    assert main(["generate", "condition-surrogate", "--n-samples", "400", "--layers", "2", "--dim", "6",
                 "--out", str(root / "surr")]) == 0
    assert main(["generate", "two-circles", "--out", str(root / "circ")]) == 0
    return root


@acceptance(14, "CLI replay is byte-identical")
class TestReplay:
    @pytest.mark.parametrize("argv", [
        ["generate", "ngon", "--n", "9", "--format", "tlns"],
        ["generate", "layer-stack", "--n-samples", "5", "--layers", "3", "--dim", "8"],
        ["barcode", "{circ}/two-circles.csv", "--svg"],
        ["global", "{surr}/manifest.json", "--K", "12", "--k", "40"],
        ["local", "{stack}/manifest.json", "--interval", "1,3", "--n", "4", "--n-permutations", "200"],
        ["dispersion", "{stack}/manifest.json", "--k-neighbors", "5", "--subsample", "8"],
    ], ids=["ngon", "layer-stack", "barcode", "global", "local", "dispersion"])
    def test_replay(self, argv, datasets, tmp_path):
        argv = [a.format(circ=datasets / "circ", surr=datasets / "surr", stack=datasets / "stack") for a in argv]
        first, again = tmp_path / "first", tmp_path / "again"
        assert main(argv + ["--out", str(first)]) == 0
        assert main(["replay", str(first / REPORT_NAME), "--out", str(again)]) == 0
        files = sorted(p.name for p in first.iterdir() if p.suffix in (".csv", ".json"))
        assert files
        for name in files:
            assert (first / name).read_bytes() == (again / name).read_bytes(), name


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
