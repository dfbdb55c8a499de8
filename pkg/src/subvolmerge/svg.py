"""Minimal self-contained SVG line charts for sweep results."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, PANEL_H = 640, 260
MARGIN = dict(left=70, right=20, top=36, bottom=44)


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _panel(xs, ys, title, xlabel, ylabel, y0):
    pts = [(x, y) for x, y in zip(xs, ys) if y is not None and math.isfinite(y)]
    left, top = MARGIN["left"], y0 + MARGIN["top"]
    w = WIDTH - MARGIN["left"] - MARGIN["right"]
    h = PANEL_H - MARGIN["top"] - MARGIN["bottom"]
    out = [f'<text x="{WIDTH / 2}" y="{y0 + 20}" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="#444"/>']
    if not pts:
        return out
    xlo, xhi = min(p[0] for p in pts), max(p[0] for p in pts)
    ylo, yhi = min(p[1] for p in pts), max(p[1] for p in pts)
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5

    def sx(x):
        return left + (x - xlo) / (xhi - xlo) * w

    def sy(y):
        return top + h - (y - ylo) / (yhi - ylo) * h

    for t in _ticks(xlo, xhi):
        out.append(f'<text x="{sx(t):.2f}" y="{top + h + 16}" text-anchor="middle" font-size="10">{_fmt(t)}</text>')
    for t in _ticks(ylo, yhi):
        out.append(f'<text x="{left - 6}" y="{sy(t) + 3:.2f}" text-anchor="end" font-size="10">{_fmt(t)}</text>')
    out.append(f'<text x="{left + w / 2}" y="{top + h + 34}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + h / 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {top + h / 2})">{escape(ylabel)}</text>')
    path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
    out.append(f'<polyline points="{path}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    for x, y in pts:
        out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="#1f77b4"/>')
    return out


def line_chart(xs, panels, xlabel) -> str:
    """``panels`` is a list of ``(title, ylabel, ys)``; one stacked panel each."""
    height = PANEL_H * len(panels)
    body = []
    for k, (title, ylabel, ys) in enumerate(panels):
        body += _panel(list(xs), list(ys), title, xlabel, ylabel, k * PANEL_H)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
            f'viewBox="0 0 {WIDTH} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")
