"""Minimal deterministic SVG line charts rendered from CSV text."""

from __future__ import annotations

import csv
import io
import math
from collections import OrderedDict

W, H = 640, 420
ML, MR, MT, MB = 70, 170, 20, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
          "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
Y_KEYS = ("mse", "distortion")
LABEL_KEYS = ("strategy", "kind")
SKIP = {"mse_ci95", "avg_power", "mu", "blocks", "seed", "lambda", "u_star", "at_cap"}


def _num(v: str) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        return math.nan


def series_from_csv(text: str):
    """(x column, y label, {series name: [(x, y), ...]})."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        return "x", "y", {}
    cols = list(rows[0].keys())
    x = "power_db"
    if x not in cols or ("d" in cols and len({r["power_db"] for r in rows}) == 1
                         and len({r["d"] for r in rows}) > 1):
        x = "d" if "d" in cols else cols[0]
    series: "OrderedDict[str, list]" = OrderedDict()
    ykey = next((k for k in Y_KEYS if k in cols), None)
    if ykey is not None:
        lab = next((k for k in LABEL_KEYS if k in cols), None)
        vary_d = "d" in cols and x != "d" and len({r["d"] for r in rows}) > 1
        for r in rows:
            name = r[lab] if lab else ykey
            if vary_d:
                name = f"{name} d={r['d']}"
            series.setdefault(name, []).append((_num(r[x]), _num(r[ykey])))
        return x, ykey, series
    for c in cols:
        if c == x or c in SKIP:
            continue
        series[c] = [(_num(r[x]), _num(r[c])) for r in rows]
    return x, "value", series


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def render_svg(xlabel: str, ylabel: str, series) -> str:
    pts = [(x, y) for s in series.values() for x, y in s if math.isfinite(x) and math.isfinite(y)]
    if not pts:
        pts = [(0.0, 1.0)]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    logy = min(ys) > 0 and max(ys) / min(ys) > 10
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ty(v) for v in ys), max(ty(v) for v in ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pw, ph = W - ML - MR, H - MT - MB

    def px(x):
        return ML + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MT + ph - (ty(y) - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>']
    for t in _ticks(x0, x1):
        X = px(t)
        out.append(f'<line x1="{X:.2f}" y1="{MT + ph}" x2="{X:.2f}" y2="{MT + ph + 4}" stroke="#000"/>')
        out.append(f'<text x="{X:.2f}" y="{MT + ph + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        Y = MT + ph - (t - y0) / (y1 - y0) * ph
        lab = f"{10 ** t:.3g}" if logy else f"{t:.3g}"
        out.append(f'<line x1="{ML - 4}" y1="{Y:.2f}" x2="{ML}" y2="{Y:.2f}" stroke="#000"/>')
        out.append(f'<text x="{ML - 6}" y="{Y + 4:.2f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{ML + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">{xlabel}</text>')
    ytxt = f"{ylabel} (log scale)" if logy else ylabel
    out.append(f'<text x="16" y="{MT + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MT + ph / 2:.1f})">{ytxt}</text>')
    for i, (name, s) in enumerate(series.items()):
        c = COLORS[i % len(COLORS)]
        good = sorted((x, y) for x, y in s if math.isfinite(x) and math.isfinite(y) and (y > 0 or not logy))
        if good:
            path = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in good)
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{path}"/>')
            for x, y in good:
                out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2.5" fill="{c}"/>')
        ly = MT + 14 + 16 * i
        out.append(f'<line x1="{W - MR + 10}" y1="{ly - 4}" x2="{W - MR + 30}" y2="{ly - 4}" '
                   f'stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{W - MR + 35}" y="{ly}">{_escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def svg_from_csv(text: str) -> str:
    x, y, series = series_from_csv(text)
    return render_svg(x, y, series)
