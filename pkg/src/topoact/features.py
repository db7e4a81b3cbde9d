"""Barcode summaries: a fixed 41-component vectorization of a barcode."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .ph import Barcode

ENTROPY_EPS = 1e-12

STATS = ("mean", "min", "q1", "median", "q3", "max", "std")
QUANTITIES = ("death_0bars", "birth_1bars", "death_1bars", "persistence_1bars", "ratio_birth_death_1bars")
TOTALS = ("total_persistence", "n_bars", "entropy")

FEATURE_NAMES: tuple[str, ...] = tuple(
    [f"{s}_{q}" for s in STATS for q in QUANTITIES] + [f"{t}_{d}" for t in TOTALS for d in ("0bars", "1bars")]
)
assert len(FEATURE_NAMES) == 41


@dataclass(frozen=True)
class BarcodeSummary:
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    names = FEATURE_NAMES

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, map(float, self.values)))


def persistent_entropy(lengths) -> float:
    """Shannon entropy of bar lengths normalized to a distribution.

    ``-sum(p * log(p + eps))`` with ``p = l / sum(l)`` and ``eps = 1e-12``.
    An empty input has entropy 0.
    """
    lengths = np.asarray(lengths, dtype=np.float64).ravel()
    if lengths.size == 0:
        return 0.0
    if np.any(~(lengths > 0)) or not np.all(np.isfinite(lengths)):
        raise DomainError("persistent entropy requires finite, strictly positive bar lengths")
    p = lengths / lengths.sum()
    return float(-np.sum(p * np.log(p + ENTROPY_EPS)))


def _seven_stats(x: np.ndarray) -> list[float]:
    if x.size == 0:
        return [0.0] * 7
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    return [x.mean(), x.min(), q1, med, q3, x.max(), x.std()]


def summarize(barcode: Barcode, count_infinite_h0: bool = False, provenance: dict | None = None) -> BarcodeSummary:
    """41-component summary of a degree-0/1 barcode.

    Degree-0 statistics use the finite deaths only. ``count_infinite_h0``
    switches ``n_bars_0bars`` between counting finite bars (N - 1) and all
    bars (N). Empty degree-1 barcodes give zeros for every degree-1 entry.
    """
    h0 = barcode.finite(0)[:, 1]
    h1 = barcode.finite(1)
    b1, d1 = h1[:, 0], h1[:, 1]
    pers1 = d1 - b1
    ratio1 = b1 / d1 if d1.size else d1

    grid = np.array([_seven_stats(q) for q in (h0, b1, d1, pers1, ratio1)])  # (5 quantities, 7 stats)
    n0 = len(barcode.bars(0)) if count_infinite_h0 else h0.size
    totals = [
        h0.sum(),
        pers1.sum(),
        n0,
        pers1.size,
        persistent_entropy(h0[h0 > 0]),  # coincident points merge at 0 and carry no length
        persistent_entropy(pers1),
    ]
    values = np.concatenate([grid.T.ravel(), totals]).astype(np.float64)
    return BarcodeSummary(values, dict(provenance or {}))


def summaries_to_csv(summaries: list[BarcodeSummary], path=None) -> str:
    """One row per summary: provenance columns first, then the 41 features."""
    prov_keys = sorted({k for s in summaries for k in s.provenance})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(prov_keys + list(FEATURE_NAMES))
    for s in summaries:
        w.writerow([s.provenance.get(k, "") for k in prov_keys] + [repr(float(v)) for v in s.values])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def summaries_from_csv(path) -> list[BarcodeSummary]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        values = np.array([float(row.pop(name)) for name in FEATURE_NAMES])
        out.append(BarcodeSummary(values, row))
    return out


def summaries_to_json(summaries: list[BarcodeSummary]) -> str:
    payload = [{"provenance": s.provenance, "features": s.as_dict()} for s in summaries]
    return json.dumps(payload, indent=2, sort_keys=True, default=str)
