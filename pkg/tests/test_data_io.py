import json
import math
import struct

import numpy as np
import pytest

from topoact.data_io import (HEADER, DatasetManifest, gen_condition_surrogate, gen_layer_stack, gen_regular_ngon,
                             gen_two_circles, read_activations, read_csv_activations, read_header,
                             write_activations, write_csv_activations, write_dataset)
from topoact.errors import (BadMagicError, CoverageError, DataError, FormatError, SizeError, TruncatedPayloadError,
                            VersionMismatchError)
from topoact.features import summarize
from topoact.ph import barcode


class TestBinaryFormat:
    def test_known_bytes(self, tmp_path):
        vals = [1.0, -2.5, 0.125, 3.0, 1e-3, 65504.0]
        raw = struct.pack("<4sHHiiQQ", b"TLNS", 1, 1, 7, 1, 2, 3) + struct.pack("<6f", *vals)
        p = tmp_path / "k.tlns"
        p.write_bytes(raw)
        pc = read_activations(p)
        assert pc.points.shape == (2, 3)
        assert pc.points.ravel().tolist() == [float(np.float32(v)) for v in vals]
        assert pc.metadata["layer"][0] == 7 and pc.metadata["condition"][0] == "poisoned"

    def test_header_is_32_bytes(self):
        assert HEADER.size == 32

    def test_roundtrip_bit_identical(self, tmp_path):
        x = np.random.default_rng(0).standard_normal((5, 4)).astype(np.float32)
        a, b = tmp_path / "a.tlns", tmp_path / "b.tlns"
        write_activations(a, x, 3, "clean")
        write_activations(b, read_activations(a).points, 3, "clean")
        assert a.read_bytes() == b.read_bytes()
        assert np.array_equal(read_activations(a).points, x.astype(np.float64))

    def _file(self, tmp_path):
        p = tmp_path / "f.tlns"
        write_activations(p, np.ones((2, 2)), 0, "clean")
        return p

    def test_truncated(self, tmp_path):
        p = self._file(tmp_path)
        p.write_bytes(p.read_bytes()[:-4])
        with pytest.raises(TruncatedPayloadError) as err:
            read_activations(p)
        assert err.value.code == "truncated_payload"

    def test_short_header(self, tmp_path):
        p = tmp_path / "h.tlns"
        p.write_bytes(b"TLNS")
        with pytest.raises(TruncatedPayloadError):
            read_activations(p)

    def test_bad_magic(self, tmp_path):
        p = self._file(tmp_path)
        p.write_bytes(b"XXXX" + p.read_bytes()[4:])
        with pytest.raises(BadMagicError) as err:
            read_activations(p)
        assert err.value.code == "bad_magic"

    def test_version_mismatch(self, tmp_path):
        p = self._file(tmp_path)
        raw = bytearray(p.read_bytes())
        raw[4:6] = struct.pack("<H", 2)
        p.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatchError) as err:
            read_activations(p)
        assert err.value.code == "version_mismatch"

    def test_trailing_bytes(self, tmp_path):
        p = self._file(tmp_path)
        p.write_bytes(p.read_bytes() + b"\0")
        with pytest.raises(FormatError):
            read_activations(p)

    def test_unknown_condition(self, tmp_path):
        with pytest.raises(DataError):
            write_activations(tmp_path / "x.tlns", np.ones((1, 1)), 0, "mystery")

    def test_header_only_read(self, tmp_path):
        h = read_header(self._file(tmp_path))
        assert (h.n_rows, h.n_cols, h.condition) == (2, 2, "clean")


class TestCSV:
    def test_roundtrip(self, tmp_path):
        x = np.random.default_rng(1).standard_normal((4, 3))
        p = tmp_path / "x.csv"
        write_csv_activations(p, x, ["a", "b", "c"])
        assert p.read_text().splitlines()[0] == "a,b,c"
        assert np.array_equal(read_csv_activations(p).points, x)

    def test_ragged(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("a,b\n1,2\n3\n")
        with pytest.raises(FormatError):
            read_csv_activations(p)


class TestManifest:
    def _dataset(self, tmp_path):
        rng = np.random.default_rng(0)
        data = {"clean": rng.standard_normal((3, 6, 4)), "poisoned": rng.standard_normal((3, 6, 4))}
        return write_dataset(tmp_path, data)

    def test_load_relative_paths(self, tmp_path):
        self._dataset(tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert doc["files"]["0"]["clean"] == "layer000_clean.tlns"
        m = DatasetManifest.load(tmp_path / "manifest.json")
        assert m.layers == [0, 1, 2] and m.dim == 4 and m.conditions() == ["clean", "poisoned"]
        assert m.load_cloud(1, "poisoned").points.shape == (6, 4)

    def test_missing_file(self, tmp_path):
        self._dataset(tmp_path)
        (tmp_path / "layer001_clean.tlns").unlink()
        with pytest.raises(DataError, match="missing file"):
            DatasetManifest.load(tmp_path / "manifest.json")

    def test_dim_mismatch(self, tmp_path):
        self._dataset(tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        doc["D"] = 5
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(DataError, match="D=4"):
            DatasetManifest.load(tmp_path / "manifest.json")

    def test_count_mismatch(self, tmp_path):
        self._dataset(tmp_path)
        doc = json.loads((tmp_path / "manifest.json").read_text())
        doc["samples"]["2"]["poisoned"] = 7
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(DataError, match="N=6"):
            DatasetManifest.load(tmp_path / "manifest.json")

    def test_coverage(self, tmp_path):
        m = self._dataset(tmp_path)
        with pytest.raises(CoverageError, match="5/clean"):
            m.require([0, 5], ["clean"])

    def test_bad_json(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{")
        with pytest.raises(FormatError):
            DatasetManifest.load(tmp_path / "manifest.json")


class TestGenerators:
    def test_two_circles_deterministic(self):
        assert np.array_equal(gen_two_circles(50, 0.05, 3).points, gen_two_circles(50, 0.05, 3).points)
        assert not np.array_equal(gen_two_circles(50, 0.05, 3).points, gen_two_circles(50, 0.05, 4).points)

    def test_two_circles_noiseless_16gons(self):
        bc = barcode(gen_two_circles(32, 0.0, 0).points)
        h1 = bc.bars(1)
        assert len(h1) == 2
        pers = h1[:, 1] - h1[:, 0]
        assert abs(pers[0] - pers[1]) < 1e-9

    def test_two_circles_min_size(self):
        with pytest.raises(SizeError):
            gen_two_circles(7)

    def test_ngon_square(self):
        bc = barcode(gen_regular_ngon(4, math.sqrt(0.5)).points)
        np.testing.assert_allclose(bc.bars(1), [[1.0, math.sqrt(2)]], atol=1e-12)

    def test_ngon_triangle(self):
        assert len(barcode(gen_regular_ngon(3).points).bars(1)) == 0

    def test_ngon_scale_linear(self):
        a, b = barcode(gen_regular_ngon(9, 1.0).points), barcode(gen_regular_ngon(9, 4.0).points)
        np.testing.assert_allclose(4 * a.finite(1), b.finite(1), rtol=1e-12)

    def test_surrogate_signature(self):
        g = gen_condition_surrogate(2000, 8, seed=0)
        rng = np.random.default_rng(0)
        sc, sp = [], []
        for _ in range(4):
            sc.append(summarize(barcode(g["clean"].points[rng.choice(2000, 200, replace=False)])))
            sp.append(summarize(barcode(g["poisoned"].points[rng.choice(2000, 200, replace=False)])))
        mean = lambda rows, name: np.mean([r[name] for r in rows])  # noqa: E731
        assert mean(sc, "mean_death_0bars") < mean(sp, "mean_death_0bars")
        assert mean(sc, "mean_birth_1bars") < mean(sp, "mean_birth_1bars")

    def test_surrogate_identical_families(self):
        g = gen_condition_surrogate(500, 4, 1.0, 1.0, seed=1, clusters_clean=3, clusters_poisoned=3)
        assert g["clean"].points.shape == g["poisoned"].points.shape == (500, 4)
        assert abs(g["clean"].points.std() - g["poisoned"].points.std()) < 0.2

    def test_layer_stack_loop(self):
        acts = gen_layer_stack(3, 3, 64, seed=0, loop_pairs=[1])
        assert acts.shape == (3, 3, 64)
        r = np.hypot(acts[1], acts[2])
        assert np.sum(np.isclose(r, 8.0)) >= 3 * 16

    def test_layer_stack_correlation(self):
        acts = gen_layer_stack(50, 2, 64, seed=0, layer_correlation=0.9)
        assert np.corrcoef(acts[0].ravel(), acts[1].ravel())[0, 1] > 0.85

    def test_layer_stack_bad_pair(self):
        with pytest.raises(CoverageError):
            gen_layer_stack(2, 2, 8, loop_pairs=[1])
