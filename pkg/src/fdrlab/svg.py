"""Minimal static SVG line plots (mean curve with a confidence band)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["band_plot"]


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    raw = (hi - lo) / n
    step = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 5, 10):
        if m * step >= raw:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return np.arange(start, hi + 0.5 * step, step)


def band_plot(
    x,
    mean,
    lower,
    upper,
    title: str = "",
    xlabel: str = "t",
    ylabel: str = "",
    reference: float | None = None,
    width: int = 640,
    height: int = 400,
) -> str:
    """SVG text for ``mean`` against ``x`` with a shaded ``[lower, upper]`` band.

    ``reference`` draws a dashed horizontal line (e.g. a theoretical limit).
    """
    x = np.asarray(x, dtype=float)
    mean, lower, upper = (np.asarray(a, dtype=float) for a in (mean, lower, upper))
    lower = np.where(np.isfinite(lower), lower, mean)
    upper = np.where(np.isfinite(upper), upper, mean)
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom

    ys = [lower.min(), upper.max()] + ([reference] if reference is not None else [])
    y0, y1 = min(ys), max(ys)
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    x0, x1 = float(x.min()), float(x.max())
    if x1 == x0:
        x1 = x0 + 1.0

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (y1 - v) / (y1 - y0) * ph

    def points(xs, vs):
        return " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, vs))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    band = points(x, upper) + " " + points(x[::-1], lower[::-1])
    out.append(f'<polygon points="{band}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>')
    out.append(f'<polyline points="{points(x, mean)}" fill="none" stroke="#08519c" stroke-width="1.5"/>')
    if reference is not None:
        y = sy(reference)
        out.append(
            f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" '
            'stroke="#d62728" stroke-dasharray="6,4"/>'
        )
    # axes
    out.append(
        f'<path d="M{left},{top} V{top + ph} H{left + pw}" fill="none" stroke="black"/>'
    )
    for tx in _ticks(x0, x1):
        px = sx(tx)
        out.append(f'<line x1="{px:.2f}" y1="{top + ph}" x2="{px:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{top + ph + 18}" text-anchor="middle">{tx:g}</text>')
    for ty in _ticks(y0, y1):
        py = sy(ty)
        out.append(f'<line x1="{left - 5}" y1="{py:.2f}" x2="{left}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py + 4:.2f}" text-anchor="end">{ty:.3g}</text>')
    out.append(
        f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="15" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 15 {top + ph / 2})">{escape(ylabel)}</text>'
    )
    out.append(
        f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
