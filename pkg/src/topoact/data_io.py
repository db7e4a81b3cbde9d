"""Activation file formats, dataset manifests and synthetic surrogates.

Binary activation file (little endian)::

    offset  size  field
    0       4     magic b"TLNS"
    4       2     format version (uint16, currently 1)
    6       2     dtype tag (uint16, 1 = float32)
    8       4     layer id (int32)
    12      4     condition code (int32, see CONDITION_CODES)
    16      8     N rows (uint64)
    24      8     D columns (uint64)
    32      N*D*4 row-major float32 payload

Values are widened to float64 on read; float32 -> float64 -> float32 is
lossless, so a write/read/write cycle reproduces the payload bit for bit.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (BadMagicError, CoverageError, DataError, FormatError, SizeError, TruncatedPayloadError,
                     VersionMismatchError)
from .ph import PointCloud

MAGIC = b"TLNS"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 1
HEADER = struct.Struct("<4sHHiiQQ")

CONDITION_CODES = {
    "clean": 0,
    "poisoned": 1,
    "executed": 2,
    "refused": 3,
    "ignored": 4,
    "locked": 5,
    "elicited": 6,
    "normal": 7,
    "adversarial": 8,
}
CONDITION_NAMES = {v: k for k, v in CONDITION_CODES.items()}


@dataclass(frozen=True)
class ActivationHeader:
    version: int
    dtype: int
    layer: int
    condition: str
    n_rows: int
    n_cols: int


def write_activations(path, points, layer: int, condition: str) -> None:
    points = np.asarray(points)
    if points.ndim != 2:
        raise DataError(f"activations must be an N x D matrix, got shape {points.shape}")
    if condition not in CONDITION_CODES:
        raise DataError(f"unknown condition {condition!r}; expected one of {sorted(CONDITION_CODES)}")
    payload = np.ascontiguousarray(points, dtype="<f4")
    header = HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_FLOAT32, int(layer), CONDITION_CODES[condition], *points.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def _parse_header(raw: bytes, path) -> ActivationHeader:
    if len(raw) < HEADER.size:
        raise TruncatedPayloadError(f"{path}: header is {len(raw)} bytes, expected {HEADER.size}")
    magic, version, dtype, layer, code, n, d = HEADER.unpack(raw[: HEADER.size])
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, this reader supports {FORMAT_VERSION}")
    if dtype != DTYPE_FLOAT32:
        raise FormatError(f"{path}: unsupported dtype tag {dtype}")
    if code not in CONDITION_NAMES:
        raise FormatError(f"{path}: unknown condition code {code}")
    return ActivationHeader(version, dtype, layer, CONDITION_NAMES[code], n, d)


def read_header(path) -> ActivationHeader:
    with open(path, "rb") as fh:
        return _parse_header(fh.read(HEADER.size), path)


def read_activations(path) -> PointCloud:
    """Load an activation file as a float64 point cloud.

    Per-point metadata: ``layer``, ``condition`` and ``sample`` (row index).
    """
    raw = Path(path).read_bytes()
    h = _parse_header(raw, path)
    expected = h.n_rows * h.n_cols * 4
    got = len(raw) - HEADER.size
    if got < expected:
        raise TruncatedPayloadError(f"{path}: payload has {got} bytes, expected {expected}")
    if got > expected:
        raise FormatError(f"{path}: {got - expected} trailing bytes after payload")
    pts = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(h.n_rows, h.n_cols).astype(np.float64)
    meta = {
        "layer": np.full(h.n_rows, h.layer),
        "condition": np.full(h.n_rows, h.condition),
        "sample": np.arange(h.n_rows),
    }
    return PointCloud(pts, meta)


def read_csv_activations(path) -> PointCloud:
    """CSV import: a header row naming the D columns, then one row per point."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise FormatError(f"{path}: missing header row")
        rows = [[float(v) for v in row] for row in reader if row]
    if any(len(r) != len(header) for r in rows):
        raise FormatError(f"{path}: ragged rows, expected {len(header)} columns")
    return PointCloud(np.array(rows, dtype=np.float64).reshape(len(rows), len(header)),
                      {"sample": np.arange(len(rows))})


def write_csv_activations(path, points, column_names=None) -> None:
    points = np.asarray(points, dtype=np.float64)
    names = column_names or [f"d{j}" for j in range(points.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in points:
            w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------- manifest


@dataclass
class DatasetManifest:
    """Index of activation files: ``files[layer][condition] -> path``.

    ``representation`` is ``"activation"`` (raw per-layer activations) or
    ``"difference"`` (files already hold difference vectors).
    """

    model: str
    layers: list[int]
    files: dict[int, dict[str, Path]]
    dim: int
    samples: dict[int, dict[str, int]]
    representation: str = "activation"
    source: Path | None = None

    @classmethod
    def load(cls, path, validate: bool = True) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from exc
        base = path.parent
        try:
            files = {int(layer): {c: base / p for c, p in conds.items()} for layer, conds in doc["files"].items()}
            samples = {int(layer): dict(c) for layer, c in doc.get("samples", {}).items()}
            m = cls(doc.get("model", ""), [int(x) for x in doc["layers"]], files, int(doc["D"]), samples,
                    doc.get("representation", "activation"), path)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: malformed manifest ({exc})") from exc
        if validate:
            m.validate()
        return m

    def to_json(self, relative_to=None) -> str:
        base = Path(relative_to) if relative_to else None

        def rel(p):
            return str(Path(p).relative_to(base)) if base else str(p)

        doc = {
            "model": self.model,
            "layers": self.layers,
            "D": self.dim,
            "representation": self.representation,
            "files": {str(layer): {c: rel(p) for c, p in sorted(conds.items())} for layer, conds in sorted(self.files.items())},
            "samples": {str(layer): dict(sorted(c.items())) for layer, c in sorted(self.samples.items())},
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(self.to_json(relative_to=path.parent))

    def validate(self) -> None:
        """Fail fast on missing files or header/manifest N, D disagreement."""
        problems = []
        for layer in self.layers:
            if layer not in self.files:
                problems.append(f"layer {layer}: no files listed")
                continue
            for cond, p in self.files[layer].items():
                if not p.exists():
                    problems.append(f"layer {layer}/{cond}: missing file {p}")
                    continue
                h = read_header(p)
                if h.n_cols != self.dim:
                    problems.append(f"layer {layer}/{cond}: D={h.n_cols}, manifest says {self.dim}")
                want = self.samples.get(layer, {}).get(cond)
                if want is not None and h.n_rows != want:
                    problems.append(f"layer {layer}/{cond}: N={h.n_rows}, manifest says {want}")
        if problems:
            raise DataError("manifest validation failed: " + "; ".join(problems))

    def conditions(self) -> list[str]:
        return sorted({c for conds in self.files.values() for c in conds})

    def require(self, layers, conditions) -> None:
        missing = [f"{layer}/{c}" for layer in layers for c in conditions
                   if layer not in self.files or c not in self.files[layer]]
        if missing:
            raise CoverageError(f"manifest lacks data for layer/condition: {', '.join(missing)}")

    def load_cloud(self, layer: int, condition: str) -> PointCloud:
        self.require([layer], [condition])
        return read_activations(self.files[layer][condition])


# -------------------------------------------------------------- generators


def gen_regular_ngon(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> PointCloud:
    if n < 3:
        raise SizeError(f"a polygon needs at least 3 vertices, got {n}")
    t = 2 * np.pi * np.arange(n) / n
    pts = np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])
    return PointCloud(pts)


def gen_two_circles(n: int = 50, noise_sigma: float = 0.05, seed: int = 0, radius: float = 1.0,
                    separation: float = 4.0) -> PointCloud:
    """Two unit circles ``separation`` apart, evenly spaced angles, radial noise.

    The first circle gets ``n - n // 2`` points, the second ``n // 2``.
    Per-point tag ``circle`` records membership.
    """
    if n < 8:
        raise SizeError(f"two circles need at least 8 points, got {n}")
    rng = np.random.default_rng(seed)
    parts, tags = [], []
    for idx, (m, cx) in enumerate(((n - n // 2, 0.0), (n // 2, separation))):
        t = 2 * np.pi * np.arange(m) / m
        r = radius + (noise_sigma * rng.standard_normal(m) if noise_sigma > 0 else 0.0)
        parts.append(np.column_stack([cx + r * np.cos(t), r * np.sin(t)]))
        tags.append(np.full(m, idx))
    return PointCloud(np.vstack(parts), {"circle": np.concatenate(tags)})


def gen_condition_surrogate(n_samples: int = 4000, D: int = 16, spread_clean: float = 0.5,
                            spread_poisoned: float = 1.0, seed: int = 0, clusters_clean: int = 8,
                            clusters_poisoned: int = 3, center_scale: float = 2.0) -> dict[str, PointCloud]:
    """Clean/poisoned Gaussian-mixture clouds with different geometry.

    Both conditions draw cluster centres from one shared pool, so equal
    spreads and cluster counts yield identically distributed clouds. With
    the defaults the clean cloud is many tight clusters (short 0-bars, many
    small early loops) and the poisoned cloud a few wide ones (longer
    0-bars, fewer later-born loops).
    """
    if spread_clean <= 0 or spread_poisoned <= 0:
        raise SizeError("spreads must be positive")
    rng = np.random.default_rng(seed)
    pool = center_scale * rng.standard_normal((max(clusters_clean, clusters_poisoned), D))
    out = {}
    for cond, spread, n_clusters in (("clean", spread_clean, clusters_clean), ("poisoned", spread_poisoned, clusters_poisoned)):
        assign = rng.integers(0, n_clusters, size=n_samples)
        pts = pool[assign] + spread * rng.standard_normal((n_samples, D))
        out[cond] = PointCloud(pts, {"condition": np.full(n_samples, cond), "cluster": assign})
    return out


def gen_layer_stack(n_samples: int, n_layers: int, D: int, seed: int = 0, layer_correlation: float = 0.0,
                    loop_pairs=(), loop_fraction: float = 0.25, loop_radius: float = 8.0) -> np.ndarray:
    """Synthetic activations of shape (n_layers, n_samples, D).

    Layer l+1 is ``rho * layer_l + sqrt(1 - rho^2) * noise`` (``rho = 0``
    gives i.i.d. layers). For each layer index ``l`` in ``loop_pairs`` a
    random subset of neurons is placed on a circle of radius
    ``loop_radius`` in the (layer l, layer l+1) plane, giving that pair's
    2D neuron embedding a large loop.
    """
    rng = np.random.default_rng(seed)
    acts = np.empty((n_layers, n_samples, D))
    acts[0] = rng.standard_normal((n_samples, D))
    rho = layer_correlation
    for layer in range(1, n_layers):
        acts[layer] = rho * acts[layer - 1] + np.sqrt(1 - rho * rho) * rng.standard_normal((n_samples, D))
    n_loop = max(3, int(round(loop_fraction * D)))
    for layer in loop_pairs:
        if not 0 <= layer < n_layers - 1:
            raise CoverageError(f"loop pair {layer} outside layer range 0..{n_layers - 2}")
        for s in range(n_samples):
            idx = rng.choice(D, size=n_loop, replace=False)
            theta = 2 * np.pi * (np.arange(n_loop) + rng.random(n_loop) * 0.5) / n_loop
            acts[layer, s, idx] = loop_radius * np.cos(theta)
            acts[layer + 1, s, idx] = loop_radius * np.sin(theta)
    return acts


def write_dataset(outdir, activations: dict[str, np.ndarray], layers=None, model: str = "synthetic",
                  representation: str = "activation") -> DatasetManifest:
    """Write per-layer/per-condition activation files plus ``manifest.json``.

    ``activations`` maps a condition name to an (L, N, D) array.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    first = next(iter(activations.values()))
    layers = list(layers) if layers is not None else list(range(first.shape[0]))
    files: dict[int, dict[str, Path]] = {}
    samples: dict[int, dict[str, int]] = {}
    for cond, stack in activations.items():
        for i, layer in enumerate(layers):
            p = outdir / f"layer{layer:03d}_{cond}.tlns"
            write_activations(p, stack[i], layer, cond)
            files.setdefault(layer, {})[cond] = p
            samples.setdefault(layer, {})[cond] = int(stack[i].shape[0])
    m = DatasetManifest(model, layers, files, int(first.shape[2]), samples, representation, outdir / "manifest.json")
    m.save(outdir / "manifest.json")
    return m
