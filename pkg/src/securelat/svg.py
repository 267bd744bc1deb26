"""Dependency-free SVG line plots for run inspection."""

from __future__ import annotations

import numpy as np

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def render_lines(
    x: np.ndarray,
    series: list,
    labels: list,
    title: str,
    width: int = 640,
    height: int = 360,
    stem: bool = False,
) -> str:
    """Render labelled series against a shared x axis as an SVG document.

    With ``stem=True`` each point is drawn as a vertical stem from zero
    (used for release-interval plots).
    """
    x = np.asarray(x, dtype=float)
    ys = [np.asarray(s, dtype=float) for s in series]
    margin = 50
    iw, ih = width - 2 * margin, height - 2 * margin
    xmin, xmax = (float(np.min(x)), float(np.max(x))) if x.size else (0.0, 1.0)
    if xmax <= xmin:
        xmax = xmin + 1.0
    finite = [s[np.isfinite(s)] for s in ys if s.size]
    ymin = min((float(np.min(s)) for s in finite if s.size), default=0.0)
    ymax = max((float(np.max(s)) for s in finite if s.size), default=1.0)
    if ymax <= ymin:
        ymax = ymin + 1.0
    pad = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad

    def px(v):
        return margin + (v - xmin) / (xmax - xmin) * iw

    def py(v):
        return margin + ih - (v - ymin) / (ymax - ymin) * ih

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{iw}" height="{ih}" fill="none" stroke="#444"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14" font-family="sans-serif">{title}</text>',
    ]
    if ymin < 0.0 < ymax:
        zy = _fmt(py(0.0))
        parts.append(
            f'<line x1="{margin}" y1="{zy}" x2="{margin + iw}" y2="{zy}" stroke="#bbb" stroke-dasharray="4 3"/>'
        )
    for tick in (xmin, 0.5 * (xmin + xmax), xmax):
        parts.append(
            f'<text x="{_fmt(px(tick))}" y="{height - margin + 18}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{_fmt(tick)}</text>'
        )
    for tick in (ymin, 0.5 * (ymin + ymax), ymax):
        parts.append(
            f'<text x="{margin - 6}" y="{_fmt(py(tick) + 4)}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{_fmt(tick)}</text>'
        )
    for i, (y, label) in enumerate(zip(ys, labels)):
        color = _COLORS[i % len(_COLORS)]
        if stem:
            for xv, yv in zip(x, y):
                parts.append(
                    f'<line x1="{_fmt(px(xv))}" y1="{_fmt(py(0.0))}" x2="{_fmt(px(xv))}" '
                    f'y2="{_fmt(py(yv))}" stroke="{color}" stroke-width="1"/>'
                )
        else:
            pts = " ".join(f"{_fmt(px(xv))},{_fmt(py(yv))}" for xv, yv in zip(x, y))
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.2"/>')
        lx = margin + 10 + 110 * i
        parts.append(
            f'<line x1="{lx}" y1="{margin - 12}" x2="{lx + 16}" y2="{margin - 12}" stroke="{color}" stroke-width="2"/>'
            f'<text x="{lx + 20}" y="{margin - 8}" font-size="11" font-family="sans-serif">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
