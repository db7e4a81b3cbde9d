import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import kruskal_weights, naive_rips_barcode
from topoact.errors import DataError, DomainError, SizeError, UsageError
from topoact.ph import (Barcode, DistanceMatrix, PointCloud, barcode, distance_matrix, rips_persistence,
                        subsample)

coords = arrays(np.float64, st.tuples(st.integers(3, 14), st.integers(1, 3)),
                elements=st.floats(-4, 4, allow_nan=False).map(lambda v: round(v, 1)))


def _pairs(bc, dim):
    return sorted(map(tuple, bc.bars(dim).tolist()))


class TestPointCloud:
    def test_vector_becomes_column(self):
        assert PointCloud([1.0, 2.0, 3.0]).points.shape == (3, 1)

    def test_rejects_nan(self):
        with pytest.raises(DataError, match="point 1"):
            PointCloud([[0.0, 0.0], [np.nan, 1.0]])

    def test_metadata_length_checked(self):
        with pytest.raises(DataError):
            PointCloud(np.zeros((3, 2)), {"tag": np.arange(2)})

    def test_take_carries_metadata(self):
        pc = PointCloud(np.arange(8.0).reshape(4, 2), {"tag": np.array(list("abcd"))})
        sub = pc.take([3, 1])
        assert sub.metadata["tag"].tolist() == ["d", "b"]
        assert sub.points[0].tolist() == [6.0, 7.0]


class TestDistanceMatrix:
    def test_euclidean(self):
        d = distance_matrix(np.array([[0.0, 0.0], [3.0, 4.0]]))
        assert d.entries[0, 1] == 5.0

    def test_cosine_range(self):
        d = distance_matrix(np.array([[1.0, 0.0], [0.0, 2.0], [-1.0, 0.0]]), "cosine")
        assert d.entries[0, 1] == pytest.approx(1.0)
        assert d.entries[0, 2] == pytest.approx(2.0)

    def test_cosine_zero_norm_names_index(self):
        with pytest.raises(DomainError, match=r"\[1\]"):
            distance_matrix(np.array([[1.0, 1.0], [0.0, 0.0]]), "cosine")

    def test_unknown_metric(self):
        with pytest.raises(UsageError):
            distance_matrix(np.eye(3), "manhattan")

    @pytest.mark.parametrize("bad", [
        np.array([[0.0, 1.0], [2.0, 0.0]]),
        np.array([[1.0, 1.0], [1.0, 0.0]]),
        np.array([[0.0, -1.0], [-1.0, 0.0]]),
        np.zeros((2, 3)),
    ])
    def test_validation(self, bad):
        with pytest.raises(DataError):
            DistanceMatrix(bad)

    def test_enclosing_radius(self):
        d = distance_matrix(np.array([[0.0], [1.0], [3.0]]))
        assert d.enclosing_radius() == 2.0


class TestFixtures:
    def test_unit_square(self):
        sq = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        bc = barcode(sq)
        assert _pairs(bc, 1) == [(1.0, math.sqrt(2.0))]
        assert bc.finite(0)[:, 1].tolist() == [1.0, 1.0, 1.0]
        assert np.isinf(bc.bars(0)[-1, 1])

    def test_triangle_has_no_loop(self):
        tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
        assert len(barcode(tri).bars(1)) == 0

    def test_single_point(self):
        bc = barcode(np.zeros((1, 3)))
        assert len(bc) == 1 and np.isinf(bc.deaths[0])

    def test_duplicate_points_give_zero_length_h0(self):
        bc = barcode(np.array([[0.0, 0.0], [0.0, 0.0], [2.0, 0.0]]))
        assert bc.finite(0)[:, 1].tolist() == [0.0, 2.0]

    def test_max_dim_zero(self):
        sq = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        bc = barcode(sq, max_dim=0)
        assert set(bc.dims.tolist()) == {0}


class TestOracle:
    @pytest.mark.parametrize("seed", range(25))
    def test_matches_full_reduction(self, seed):
        rng = np.random.default_rng(seed)
        n, dim = int(rng.integers(4, 16)), int(rng.integers(1, 4))
        pts = rng.random((n, dim))
        if seed % 3 == 0:
            pts = np.round(pts * 3) / 3  # ties and duplicates
        d = distance_matrix(pts).entries
        bc = rips_persistence(d, threshold=np.inf)
        h0, h1 = naive_rips_barcode(d)
        assert _pairs(bc, 0) == h0
        assert _pairs(bc, 1) == h1

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_with_threshold(self, seed):
        rng = np.random.default_rng(100 + seed)
        pts = rng.random((12, 2))
        d = distance_matrix(pts).entries
        t = float(np.quantile(d[np.triu_indices(12, 1)], 0.3))
        bc = rips_persistence(d, threshold=t)
        _, h1 = naive_rips_barcode(d, t)
        assert _pairs(bc, 1) == h1
        alive = bc.truncated[bc.dims == 1]
        assert np.all(bc.deaths[bc.dims == 1][alive] == t)

    def test_auto_threshold_loses_nothing(self):
        rng = np.random.default_rng(7)
        d = distance_matrix(rng.random((20, 2))).entries
        assert _pairs(rips_persistence(d), 1) == _pairs(rips_persistence(d, threshold=np.inf), 1)

    @given(coords)
    def test_h0_is_mst(self, pts):
        d = distance_matrix(pts).entries
        deaths = sorted(barcode(pts, max_dim=0).finite(0)[:, 1].tolist())
        assert deaths == kruskal_weights(d)


class TestProperties:
    @given(coords, st.randoms(use_true_random=False))
    def test_relabeling_invariance(self, pts, rnd):
        perm = list(range(len(pts)))
        rnd.shuffle(perm)
        a, b = barcode(pts), barcode(pts[perm])
        assert _pairs(a, 0) == _pairs(b, 0)
        assert _pairs(a, 1) == _pairs(b, 1)

    @given(coords, st.sampled_from([0.25, 0.5, 2.0, 8.0]))
    def test_scale_equivariance(self, pts, c):
        # powers of two scale every distance exactly
        a, b = barcode(pts), barcode(c * pts)
        assert np.array_equal(a.births * c, b.births)
        assert np.array_equal(a.deaths * c, b.deaths)

    @given(coords)
    def test_counts_and_order(self, pts):
        bc = barcode(pts)
        h0 = bc.bars(0)
        assert len(h0) == len(pts)
        assert np.isinf(h0[-1, 1]) and np.all(np.isfinite(h0[:-1, 1]))
        assert np.all(np.diff(h0[:-1, 1]) >= 0)
        h1 = bc.bars(1)
        assert np.all(h1[:, 1] > h1[:, 0])
        assert np.all(h1[:, 1] <= bc.threshold)

    @given(coords)
    def test_translation_invariance(self, pts):
        a, b = barcode(pts), barcode(pts + 3.0)
        np.testing.assert_allclose(a.finite(1), b.finite(1), atol=1e-9)


class TestErrors:
    def test_unsupported_dimension(self):
        with pytest.raises(UsageError):
            barcode(np.eye(3), max_dim=2)

    def test_negative_threshold(self):
        with pytest.raises(DomainError):
            barcode(np.eye(3), threshold=-1.0)

    def test_bad_threshold_string(self):
        with pytest.raises(UsageError):
            barcode(np.eye(3), threshold="max")


class TestSubsample:
    def test_deterministic_and_sorted(self):
        pc = PointCloud(np.arange(40.0).reshape(20, 2))
        a, b = subsample(pc, 7, 3), subsample(pc, 7, 3)
        assert np.array_equal(a.points, b.points)
        idx = a.metadata["source_index"]
        assert np.all(np.diff(idx) > 0) and len(set(idx.tolist())) == 7

    def test_nested_source_index(self):
        pc = PointCloud(np.arange(40.0).reshape(20, 2))
        inner = subsample(subsample(pc, 10, 1), 4, 2)
        assert np.array_equal(pc.points[inner.metadata["source_index"]], inner.points)

    def test_too_many(self):
        with pytest.raises(SizeError):
            subsample(PointCloud(np.zeros((3, 2))), 4, 0)


def test_barcode_intervals_roundtrip():
    bc = Barcode(np.array([0, 1]), np.array([0.0, 1.0]), np.array([np.inf, 2.0]), np.array([False, False]))
    assert bc.intervals() == [(0, 0.0, math.inf), (1, 1.0, 2.0)]
