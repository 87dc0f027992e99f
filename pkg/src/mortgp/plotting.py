"""Static SVG rendering of a forecast curve with its interval band."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

__all__ = ["curve_svg"]

WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 64, "right": 20, "top": 36, "bottom": 48}


def _ticks(lo, hi, n=6):
    step = (hi - lo) / max(n - 1, 1)
    if step <= 0:
        return [lo]
    mag = 10 ** np.floor(np.log10(step))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= step), default=step)
    start = np.ceil(lo / step) * step
    return list(np.arange(start, hi + 0.5 * step, step))


def _polyline(xs, ys):
    return "M" + " L".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def _dots(xs, ys, r=2.2):
    return " ".join(f"M{x - r:.2f},{y:.2f} a{r},{r} 0 1,0 {2 * r},0 a{r},{r} 0 1,0 {-2 * r},0" for x, y in zip(xs, ys))


def curve_svg(ages, mean, lower, upper, observed=None, title: str = "", ylabel: str = "log rate") -> str:
    """SVG document: observed points, mean line and dashed interval bounds.

    Each series is a single ``<path>``; axes use ``<line>`` and ``<text>``.
    """
    ages = np.asarray(ages, float)
    series = [np.asarray(v, float) for v in (mean, lower, upper)]
    obs = None if observed is None else np.asarray(observed, float)
    ys = np.concatenate(series + ([obs[np.isfinite(obs)]] if obs is not None else []))
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    x_lo, x_hi = float(ages.min()), float(ages.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (np.asarray(x) - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return MARGIN["top"] + (y_hi - np.asarray(y)) / (y_hi - y_lo) * ph

    x0, y0 = MARGIN["left"], MARGIN["top"] + ph
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}" stroke="black"/>',
    ]
    for t in _ticks(x_lo, x_hi):
        x = float(sx(t))
        out.append(f'<line x1="{x:.2f}" y1="{y0}" x2="{x:.2f}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{y0 + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{t:g}</text>')
    for t in _ticks(y_lo, y_hi):
        y = float(sy(t))
        out.append(f'<line x1="{x0 - 5}" y1="{y:.2f}" x2="{x0}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{t:g}</text>')
    out.append(f'<text x="{x0 + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">age</text>')
    out.append(
        f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    if obs is not None:
        keep = np.isfinite(obs)
        out.append(f'<path id="observed" d="{_dots(sx(ages[keep]), sy(obs[keep]))}" fill="none" stroke="black" stroke-width="0.8"/>')
    m, lo, hi = series
    out.append(f'<path id="mean" d="{_polyline(sx(ages), sy(m))}" fill="none" stroke="#c0392b" stroke-width="1.6"/>')
    for name, v in (("lower95", lo), ("upper95", hi)):
        out.append(
            f'<path id="{name}" d="{_polyline(sx(ages), sy(v))}" fill="none" stroke="#2c3e50" '
            'stroke-width="1.1" stroke-dasharray="5,4"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
