"""Minimal SVG line and scatter charts (axes, ticks, legend)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 640, 420
ML, MR, MT, MB = 64, 150, 40, 52
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#7f7f7f")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def _bounds(series):
    xs = [x for pts in series.values() for x, _ in pts if math.isfinite(x)]
    ys = [y for pts in series.values() for _, y in pts if math.isfinite(y)]
    if not xs:
        return 0.0, 1.0, 0.0, 1.0
    x0, x1, y0, y1 = min(xs), max(xs), min(min(ys), 0.0), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y1 = y0 + 1
    return x0, x1, y0, y1


def _chart(series: dict, title: str, xlabel: str, ylabel: str, lines: bool) -> str:
    x0, x1, y0, y1 = _bounds(series)
    pw, ph = W - ML - MR, H - MT - MB

    def sx(x):
        return ML + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MT + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{ML}" y1="{MT + ph}" x2="{ML + pw}" y2="{MT + ph}" stroke="black"/>',
        f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{MT + ph}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.1f}" y1="{MT + ph}" x2="{sx(t):.1f}" y2="{MT + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.1f}" y="{MT + ph + 17}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ML - 4}" y1="{sy(t):.1f}" x2="{ML}" y2="{sy(t):.1f}" stroke="black"/>')
        out.append(f'<line x1="{ML}" y1="{sy(t):.1f}" x2="{ML + pw}" y2="{sy(t):.1f}" stroke="#eee"/>')
        out.append(f'<text x="{ML - 7}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{ML + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{MT + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 16 {MT + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for i, (name, pts) in enumerate(series.items()):
        c = PALETTE[i % len(PALETTE)]
        pts = [(x, y) for x, y in pts if math.isfinite(x) and math.isfinite(y)]
        if lines and len(pts) > 1:
            path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{c}" stroke-width="1.8"/>')
        for x, y in pts:
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.6" fill="{c}"/>')
        ly = MT + 10 + 18 * i
        out.append(f'<rect x="{W - MR + 14}" y="{ly - 8}" width="12" height="12" fill="{c}"/>')
        out.append(f'<text x="{W - MR + 32}" y="{ly + 2}">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart(series: dict, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """``series`` maps a legend label to a list of ``(x, y)`` points."""
    return _chart(series, title, xlabel, ylabel, lines=True)


def scatter_chart(series: dict, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    return _chart(series, title, xlabel, ylabel, lines=False)
