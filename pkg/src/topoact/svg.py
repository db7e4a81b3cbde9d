"""Minimal static SVG charts: barcodes, scatter plots, beeswarms and line charts.

Output is plain text with fixed float formatting, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = 50
PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


def _f(x: float) -> str:
    return f"{x:.3f}"


class _Canvas:
    def __init__(self, title: str, width: int = WIDTH, height: int = HEIGHT):
        self.w, self.h = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        ]

    def frame(self, xlim, ylim, xlabel="", ylabel=""):
        self.xlim, self.ylim = _pad(xlim), _pad(ylim)
        x0, y0, x1, y1 = MARGIN, self.h - MARGIN, self.w - 20, 35
        self.parts.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>')
        for t in np.linspace(*self.xlim, 5):
            self.parts.append(f'<text x="{_f(self.x(t))}" y="{y0 + 15}" text-anchor="middle" font-family="sans-serif" '
                              f'font-size="10">{t:.3g}</text>')
        for t in np.linspace(*self.ylim, 5):
            self.parts.append(f'<text x="{x0 - 5}" y="{_f(self.y(t) + 3)}" text-anchor="end" font-family="sans-serif" '
                              f'font-size="10">{t:.3g}</text>')
        self.parts.append(f'<text x="{(x0 + x1) / 2}" y="{self.h - 12}" text-anchor="middle" font-family="sans-serif" '
                          f'font-size="12">{escape(xlabel)}</text>')
        self.parts.append(f'<text x="14" y="{(y0 + y1) / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" '
                          f'transform="rotate(-90 14 {(y0 + y1) / 2})">{escape(ylabel)}</text>')

    def x(self, v):
        lo, hi = self.xlim
        return MARGIN + (v - lo) / (hi - lo) * (self.w - 20 - MARGIN)

    def y(self, v):
        lo, hi = self.ylim
        return self.h - MARGIN - (v - lo) / (hi - lo) * (self.h - MARGIN - 35)

    def add(self, s: str):
        self.parts.append(s)

    def legend(self, names):
        for i, name in enumerate(names):
            y = 40 + 14 * i
            self.add(f'<rect x="{self.w - 150}" y="{y - 8}" width="10" height="10" fill="{PALETTE[i % len(PALETTE)]}"/>')
            self.add(f'<text x="{self.w - 136}" y="{y + 1}" font-family="sans-serif" font-size="10">{escape(str(name))}</text>')

    def render(self, path=None) -> str:
        text = "\n".join(self.parts + ["</svg>"]) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _pad(lim):
    lo, hi = float(lim[0]), float(lim[1])
    if not np.isfinite(lo) or not np.isfinite(hi):
        lo, hi = 0.0, 1.0
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def barcode_svg(bc, path=None, title: str = "Barcode") -> str:
    """Horizontal bars per degree; infinite bars run to the right edge."""
    finite = bc.deaths[np.isfinite(bc.deaths)]
    top = float(max(finite.max() if finite.size else 1.0, bc.births.max() if len(bc) else 0.0)) * 1.05 or 1.0
    c = _Canvas(title)
    n = len(bc)
    c.frame((0, top), (0, max(n, 1)), "filtration value", "bar")
    for i, (d, b, e) in enumerate(zip(bc.dims, bc.births, bc.deaths)):
        e = top if not np.isfinite(e) else e
        y = c.y(n - i - 0.5)
        c.add(f'<line x1="{_f(c.x(b))}" y1="{_f(y)}" x2="{_f(c.x(e))}" y2="{_f(y)}" '
              f'stroke="{PALETTE[int(d)]}" stroke-width="2"/>')
    c.legend([f"H{d}" for d in sorted(set(bc.dims.tolist()))])
    return c.render(path)


def scatter_svg(x, y, groups=None, path=None, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    groups = np.zeros(x.size, dtype=int) if groups is None else np.asarray(groups)
    names = sorted(set(groups.tolist()), key=str)
    c = _Canvas(title)
    c.frame((x.min(), x.max()) if x.size else (0, 1), (y.min(), y.max()) if y.size else (0, 1), xlabel, ylabel)
    for xi, yi, g in zip(x, y, groups):
        c.add(f'<circle cx="{_f(c.x(xi))}" cy="{_f(c.y(yi))}" r="3" fill="{PALETTE[names.index(g) % len(PALETTE)]}" '
              f'fill-opacity="0.7"/>')
    if len(names) > 1:
        c.legend(names)
    return c.render(path)


def beeswarm_svg(values, features, names, path=None, title: str = "Attributions", max_features: int = 15) -> str:
    """One row per feature; dots are per-row attributions colored by feature value."""
    values = np.asarray(values, dtype=float)
    features = np.asarray(features, dtype=float)
    order = np.argsort(-np.abs(values).mean(axis=0), kind="stable")[:max_features]
    c = _Canvas(title, height=max(HEIGHT, 30 + 22 * len(order) + MARGIN))
    lim = float(np.abs(values).max()) if values.size else 1.0
    c.frame((-lim, lim), (0, len(order)), "attribution (logit)", "")
    rng = np.random.default_rng(0)
    for row, j in enumerate(order):
        yc = len(order) - row - 0.5
        f = features[:, j]
        span = f.max() - f.min()
        scaled = (f - f.min()) / span if span > 0 else np.full(f.size, 0.5)
        c.add(f'<text x="{MARGIN + 4}" y="{_f(c.y(yc) + 3)}" font-family="sans-serif" font-size="9">{escape(names[j])}</text>')
        jitter = rng.uniform(-0.3, 0.3, f.size)
        for v, s, jt in zip(values[:, j], scaled, jitter):
            red, blue = int(255 * s), int(255 * (1 - s))
            c.add(f'<circle cx="{_f(c.x(v))}" cy="{_f(c.y(yc + jt))}" r="2" fill="rgb({red},0,{blue})"/>')
    return c.render(path)


def line_svg(x, series: dict, path=None, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    allv = np.concatenate([v[np.isfinite(v)] for v in ys.values()]) if ys else np.zeros(0)
    c = _Canvas(title)
    c.frame((x.min(), x.max()) if x.size else (0, 1), (allv.min(), allv.max()) if allv.size else (0, 1), xlabel, ylabel)
    for i, (name, y) in enumerate(ys.items()):
        pts = " ".join(f"{_f(c.x(a))},{_f(c.y(b))}" for a, b in zip(x, y) if np.isfinite(b))
        c.add(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="1.5"/>')
    c.legend(list(ys))
    return c.render(path)
