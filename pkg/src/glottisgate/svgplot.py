"""Minimal deterministic SVG line plots (no timestamps, no random ids)."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 360
MARGIN = dict(left=60, right=60, top=30, bottom=50)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _scale(lo: float, hi: float, a: float, b: float):
    if hi == lo:
        hi = lo + 1.0
    return lambda v: a + (v - lo) * (b - a) / (hi - lo)


def _polyline(xs, ys, sx, sy, color, dashed=False) -> str:
    pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys) if math.isfinite(y))
    dash = ' stroke-dasharray="5,3"' if dashed else ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{pts}"/>'


def dual_axis_plot(
    x_labels: Sequence[str],
    left: dict[str, Sequence[float]],
    right: dict[str, Sequence[float]] | None = None,
    title: str = "",
    x_title: str = "",
    left_range: tuple[float, float] = (0.0, 1.0),
    right_range: tuple[float, float] = (0.0, 1.0),
    x_values: Sequence[float] | None = None,
) -> str:
    """Lines against categorical (or numeric when ``x_values`` given) x positions."""
    n = len(x_labels)
    xs = list(x_values) if x_values is not None else list(range(n))
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    sx = _scale(min(xs), max(xs), x0, x1)
    syl = _scale(*left_range, y0, y1)
    syr = _scale(*right_range, y0, y1)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    if right:
        out.append(f'<line x1="{x1}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="black"/>')
    for k in range(6):
        fl = left_range[0] + k * (left_range[1] - left_range[0]) / 5
        out.append(f'<text x="{x0 - 6}" y="{_fmt(syl(fl) + 4)}" text-anchor="end" font-size="10">{fl:.2f}</text>')
        if right:
            fr = right_range[0] + k * (right_range[1] - right_range[0]) / 5
            out.append(f'<text x="{x1 + 6}" y="{_fmt(syr(fr) + 4)}" font-size="10">{fr:.2f}</text>')
    step = max(1, math.ceil(n / 12))
    for i in range(0, n, step):
        out.append(
            f'<text x="{_fmt(sx(xs[i]))}" y="{y0 + 16}" text-anchor="middle" font-size="10">{escape(x_labels[i])}</text>'
        )
    out.append(f'<text x="{(x0 + x1) / 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{escape(x_title)}</text>')
    legend_y = MARGIN["top"] + 4
    series = [(name, ys, syl, False) for name, ys in left.items()]
    series += [(name, ys, syr, True) for name, ys in (right or {}).items()]
    for k, (name, ys, sy, dashed) in enumerate(series):
        color = COLORS[k % len(COLORS)]
        out.append(_polyline(xs, ys, sx, sy, color, dashed))
        ly = legend_y + 14 * k
        out.append(f'<text x="{x0 + 8}" y="{ly + 10}" font-size="11" fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def waveform_panels(series: dict[str, Sequence[float]], fps: float, title: str = "") -> str:
    """One stacked panel per recording: area (px^2) against time (ms)."""
    panel_h = 140
    height = MARGIN["top"] + panel_h * max(1, len(series)) + 20
    x0, x1 = MARGIN["left"], WIDTH - 20
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">',
        f'<rect width="{WIDTH}" height="{height}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    for k, (name, areas) in enumerate(series.items()):
        top = MARGIN["top"] + k * panel_h
        bottom = top + panel_h - 30
        n = len(areas)
        t_ms = [1000.0 * i / fps for i in range(n)]
        amax = max(max(areas, default=0.0), 1.0)
        sx = _scale(0.0, t_ms[-1] if n > 1 else 1.0, x0, x1)
        sy = _scale(0.0, amax, bottom, top)
        out.append(f'<line x1="{x0}" y1="{bottom}" x2="{x1}" y2="{bottom}" stroke="black"/>')
        out.append(f'<line x1="{x0}" y1="{bottom}" x2="{x0}" y2="{top}" stroke="black"/>')
        out.append(f'<text x="{x0 - 6}" y="{top + 8}" text-anchor="end" font-size="10">{amax:.0f}</text>')
        out.append(f'<text x="{x1}" y="{bottom + 14}" text-anchor="end" font-size="10">{(t_ms[-1] if n else 0):.1f} ms</text>')
        out.append(f'<text x="{x0 + 6}" y="{top + 10}" font-size="11">{escape(name)}</text>')
        out.append(_polyline(t_ms, areas, sx, sy, COLORS[0]))
    out.append("</svg>")
    return "\n".join(out) + "\n"
