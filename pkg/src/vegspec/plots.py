"""Dependency-free image writers: 8-bit PGM heatmaps and SVG line charts.

Output is a pure function of the inputs (fixed number formatting, no
timestamps), so identical data always yields identical bytes.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def pgm_bytes(matrix: np.ndarray) -> bytes:
    """Binary (P5) graymap of a matrix, min-max scaled to 0..255."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("PGM needs a non-empty 2-D matrix")
    lo, hi = float(m.min()), float(m.max())
    if hi > lo:
        scaled = np.rint((m - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(m)
    rows, cols = m.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    return header + scaled.astype(np.uint8).tobytes()


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(float(round(t, 10)))
        t += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def line_chart_svg(
    x: Sequence[float],
    series: Sequence[Tuple[str, Sequence[float]]],
    title: str,
    xlabel: str,
    ylabel: str,
    band: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
    width: int = 800,
    height: int = 420,
) -> str:
    """Self-contained SVG with one polyline per (name, values) series.

    ``band`` optionally shades a (lower, upper) envelope behind the lines.
    """
    x = np.asarray(x, dtype=np.float64)
    ys = [np.asarray(v, dtype=np.float64) for _, v in series]
    stack = ys + ([np.asarray(band[0]), np.asarray(band[1])] if band else [])
    y_lo = min(float(np.min(v)) for v in stack)
    y_hi = max(float(np.max(v)) for v in stack)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    x_lo, x_hi = float(x.min()), float(x.max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0

    left, right, top, bottom = 70, 20, 40, 55
    pw, ph = width - left - right, height - top - bottom
    px = lambda v: left + (v - x_lo) / (x_hi - x_lo) * pw
    py = lambda v: top + (y_hi - v) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
    ]
    for t in _nice_ticks(x_lo, x_hi):
        out.append(f'<line x1="{_fmt(px(t))}" y1="{top + ph}" x2="{_fmt(px(t))}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px(t))}" y="{top + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        out.append(f'<line x1="{left - 5}" y1="{_fmt(py(t))}" x2="{left}" y2="{_fmt(py(t))}" stroke="black"/>')
        out.append(f'<line x1="{left}" y1="{_fmt(py(t))}" x2="{left + pw}" y2="{_fmt(py(t))}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(py(t) + 4)}" text-anchor="end">{t:g}</text>')
    if y_lo < 0 < y_hi:
        out.append(f'<line x1="{left}" y1="{_fmt(py(0))}" x2="{left + pw}" y2="{_fmt(py(0))}" stroke="#999" stroke-dasharray="4 3"/>')
    if band is not None:
        lower, upper = np.asarray(band[0]), np.asarray(band[1])
        pts = [f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, upper)]
        pts += [f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x[::-1], lower[::-1])]
        out.append(f'<polygon points="{" ".join(pts)}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>')
    for k, ((name, _), y) in enumerate(zip(series, ys)):
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, y))
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 14 + 16 * k
        out.append(f'<line x1="{left + pw - 150}" y1="{ly - 4}" x2="{left + pw - 130}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 125}" y="{ly}">{escape(name)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
