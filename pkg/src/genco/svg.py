"""Standalone SVG line charts and bar histograms, no plotting dependency."""

from __future__ import annotations

import math
from typing import Sequence

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
WIDTH, HEIGHT = 720, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 50, 60


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def _num(v: float) -> str:
    return f"{v:.2f}"


def _range(values: Sequence[float]) -> tuple[float, float]:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if hi == lo:
        pad = abs(hi) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _frame(title: str, x_label: str, y_label: str, x_rng, y_rng) -> list[str]:
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{WIDTH / 2:.1f}" y="28" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{_escape(title)}</text>',
    ]
    for i in range(6):
        y_val = y_rng[0] + (y_rng[1] - y_rng[0]) * i / 5
        y = TOP + ph - ph * i / 5
        out.append(f'<line x1="{LEFT}" y1="{_num(y)}" x2="{LEFT + pw}" y2="{_num(y)}" '
                   'stroke="#e0e0e0" stroke-width="1"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_num(y + 4)}" text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">{y_val:.3g}</text>')
    for i in range(6):
        x_val = x_rng[0] + (x_rng[1] - x_rng[0]) * i / 5
        x = LEFT + pw * i / 5
        out.append(f'<text x="{_num(x)}" y="{TOP + ph + 18}" text-anchor="middle" font-size="11" '
                   f'font-family="sans-serif">{x_val:.3g}</text>')
    out.append(f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" '
               'stroke="#000000" stroke-width="1.5"/>')
    out.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" '
               'stroke="#000000" stroke-width="1.5"/>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 16}" text-anchor="middle" '
               f'font-size="12" font-family="sans-serif">{_escape(x_label)}</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'font-family="sans-serif" transform="rotate(-90 18 {TOP + ph / 2:.1f})">'
               f'{_escape(y_label)}</text>')
    return out


def _legend(names: Sequence[str]) -> list[str]:
    out = []
    x = WIDTH - RIGHT + 16
    for i, name in enumerate(names):
        y = TOP + 10 + 20 * i
        color = COLORS[i % len(COLORS)]
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 22}" y2="{y}" stroke="{color}" stroke-width="2.5"/>')
        out.append(f'<text x="{x + 28}" y="{y + 4}" font-size="12" font-family="sans-serif">'
                   f'{_escape(name)}</text>')
    return out


def line_chart(title: str, x_label: str, y_label: str, xs: Sequence[float],
               series: Sequence[tuple[str, Sequence[float]]]) -> str:
    """Polyline per series; non-finite points break the line."""
    if not xs:
        raise ValueError("line_chart: no x values")
    x_rng = _range(list(xs))
    y_rng = _range([v for _, ys in series for v in ys])
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x_rng[0]) / (x_rng[1] - x_rng[0]) * pw

    def py(y):
        return TOP + ph - (y - y_rng[0]) / (y_rng[1] - y_rng[0]) * ph

    out = _frame(title, x_label, y_label, x_rng, y_rng)
    for i, (_, ys) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        segment: list[str] = []
        for x, y in list(zip(xs, ys)) + [(math.nan, math.nan)]:
            if math.isfinite(x) and math.isfinite(y):
                segment.append(f"{_num(px(x))},{_num(py(y))}")
                continue
            if segment:
                out.append(f'<polyline points="{" ".join(segment)}" fill="none" stroke="{color}" '
                           'stroke-width="2"/>')
                segment = []
    out += _legend([name for name, _ in series])
    out.append("</svg>")
    return "\n".join(out) + "\n"


def histogram_chart(title: str, edges: Sequence[float],
                    populations: Sequence[tuple[str, Sequence[int]]]) -> str:
    """Overlaid step outlines of binned counts."""
    top = max([max(c) for _, c in populations if len(c)] + [1])
    x_rng = (edges[0], edges[-1])
    y_rng = (0.0, top * 1.05)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x_rng[0]) / (x_rng[1] - x_rng[0]) * pw

    def py(y):
        return TOP + ph - y / y_rng[1] * ph

    out = _frame(title, "discriminator score", "occurrences", x_rng, y_rng)
    for i, (_, counts) in enumerate(populations):
        color = COLORS[i % len(COLORS)]
        pts = [f"{_num(px(edges[0]))},{_num(py(0))}"]
        for k, c in enumerate(counts):
            pts.append(f"{_num(px(edges[k]))},{_num(py(c))}")
            pts.append(f"{_num(px(edges[k + 1]))},{_num(py(c))}")
        pts.append(f"{_num(px(edges[-1]))},{_num(py(0))}")
        out.append(f'<polyline points="{" ".join(pts)}" fill="{color}" fill-opacity="0.15" '
                   f'stroke="{color}" stroke-width="1.5"/>')
    out += _legend([name for name, _ in populations])
    out.append("</svg>")
    return "\n".join(out) + "\n"
