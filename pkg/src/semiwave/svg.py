"""Minimal deterministic SVG line charts, no plotting dependencies."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["line_chart"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")
_W, _H = 720, 480
_ML, _MR, _MT, _MB = 72, 24, 40, 56


def _ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if step >= raw:
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(step):
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out


def line_chart(path: str, series: list[tuple[np.ndarray, np.ndarray, str]],
               title: str = "", xlabel: str = "", ylabel: str = "") -> None:
    """Write a line chart of (x, y, label) series to an SVG file."""
    xs = np.concatenate([np.asarray(s[0], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    finite = np.isfinite(xs) & np.isfinite(ys)
    x_lo, x_hi = float(np.min(xs[finite])), float(np.max(xs[finite]))
    y_lo, y_hi = float(np.min(ys[finite])), float(np.max(ys[finite]))
    if y_hi <= y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def px(x: float) -> float:
        return _ML + pw * (x - x_lo) / (x_hi - x_lo)

    def py(y: float) -> float:
        return _MT + ph * (1.0 - (y - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]
    for xv in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{px(xv):.2f}" y1="{_MT + ph:.2f}" '
                     f'x2="{px(xv):.2f}" y2="{_MT + ph + 5:.2f}" stroke="black"/>')
        parts.append(f'<text x="{px(xv):.2f}" y="{_MT + ph + 20:.2f}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{xv:g}</text>')
    for yv in _ticks(y_lo, y_hi):
        parts.append(f'<line x1="{_ML - 5}" y1="{py(yv):.2f}" x2="{_ML}" '
                     f'y2="{py(yv):.2f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{py(yv) + 4:.2f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">{yv:g}</text>')
        if y_lo < 0.0 < y_hi and yv == 0.0:
            parts.append(f'<line x1="{_ML}" y1="{py(0):.2f}" x2="{_ML + pw}" '
                         f'y2="{py(0):.2f}" stroke="#bbbbbb" stroke-dasharray="4 3"/>')
    parts.append(f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" '
                 'fill="none" stroke="black"/>')
    parts.append(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 14}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13">{xlabel}</text>')
    parts.append(f'<text x="20" y="{_MT + ph / 2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 20 {_MT + ph / 2:.1f})">{ylabel}</text>')

    for i, (x, y, label) in enumerate(series):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], y[ok]))
        color = _COLORS[i % len(_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1.5"/>')
        ly = _MT + 16 + 16 * i
        parts.append(f'<line x1="{_ML + pw - 130}" y1="{ly - 4}" '
                     f'x2="{_ML + pw - 104}" y2="{ly - 4}" stroke="{color}" '
                     'stroke-width="2"/>')
        parts.append(f'<text x="{_ML + pw - 98}" y="{ly}" font-family="sans-serif" '
                     f'font-size="12">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
