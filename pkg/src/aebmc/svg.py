"""Minimal self-contained SVG charts. Output depends only on the input data."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 55


def _f(x: float) -> str:
    return f"{x:.2f}"


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * span:
        ticks.append(round(t, 10))
        t += step
    return ticks


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<text x="{(LEFT + WIDTH - RIGHT) / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="16" y="{(TOP + HEIGHT - BOTTOM) / 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {(TOP + HEIGHT - BOTTOM) / 2})">{escape(ylabel)}</text>',
        ]
        self.x0, self.x1 = LEFT, WIDTH - RIGHT
        self.y0, self.y1 = HEIGHT - BOTTOM, TOP

    def axes(self, xticks, yticks, xmap, ymap, ylabels=None):
        p = self.parts
        p.append(f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x1}" y2="{self.y0}" stroke="black"/>')
        p.append(f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x0}" y2="{self.y1}" stroke="black"/>')
        for t in xticks:
            x = _f(xmap(t))
            p.append(f'<line x1="{x}" y1="{self.y0}" x2="{x}" y2="{self.y0 + 5}" stroke="black"/>')
            p.append(f'<text x="{x}" y="{self.y0 + 18}" text-anchor="middle">{t:g}</text>')
        for k, t in enumerate(yticks):
            y = _f(ymap(t))
            label = ylabels[k] if ylabels else f"{t:g}"
            p.append(f'<line x1="{self.x0 - 5}" y1="{y}" x2="{self.x0}" y2="{y}" stroke="black"/>')
            p.append(f'<line x1="{self.x0}" y1="{y}" x2="{self.x1}" y2="{y}" stroke="#dddddd"/>')
            p.append(f'<text x="{self.x0 - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">{label}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def histogram_svg(edges, counts, title="Stopping-distance distribution",
                  xlabel="Stopping distance (m)", ylabel="Count") -> str:
    edges = [float(e) for e in edges]
    counts = [int(c) for c in counts]
    c = _Canvas(title, xlabel, ylabel)
    lo, hi = edges[0], edges[-1]
    top = max(max(counts), 1)

    def xmap(v):
        return c.x0 + (v - lo) / (hi - lo) * (c.x1 - c.x0)

    def ymap(v):
        return c.y0 - v / top * (c.y0 - c.y1)

    c.axes(_nice_ticks(lo, hi), _nice_ticks(0, top), xmap, ymap)
    for k, n in enumerate(counts):
        if n == 0:
            continue
        x, w = xmap(edges[k]), xmap(edges[k + 1]) - xmap(edges[k])
        y = ymap(n)
        c.parts.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(c.y0 - y)}" '
            f'fill="#4c72b0" stroke="white" stroke-width="0.5"/>'
        )
    return c.render()


def risk_curve_svg(headways, probabilities, thresholds: dict, p_floor: float = 1e-4,
                   title="Collision probability vs initial headway") -> str:
    """Log-scale exceedance curve with dashed lines at each risk level."""
    hs = [float(h) for h in headways]
    ps = [float(p) for p in probabilities]
    c = _Canvas(title, "Initial headway H0 (m)", "P(D_stop > H0)")
    lo, hi = hs[0], hs[-1]
    log_lo, log_hi = math.log10(p_floor), 0.0

    def xmap(v):
        return c.x0 + (v - lo) / (hi - lo) * (c.x1 - c.x0)

    def ymap(p):
        lp = min(max(math.log10(max(p, p_floor)), log_lo), log_hi)
        return c.y0 - (lp - log_lo) / (log_hi - log_lo) * (c.y0 - c.y1)

    decades = [10.0 ** k for k in range(int(log_lo), 1)]
    c.axes(_nice_ticks(lo, hi), decades, xmap, ymap, ylabels=[f"{d:g}" for d in decades])

    pts = [f"{_f(xmap(h))},{_f(ymap(p))}" for h, p in zip(hs, ps) if p >= p_floor]
    if pts:
        c.parts.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="#c44e52" stroke-width="2"/>')
    for risk, h in sorted(thresholds.items(), reverse=True):
        y = _f(ymap(risk))
        c.parts.append(
            f'<line x1="{c.x0}" y1="{y}" x2="{c.x1}" y2="{y}" stroke="#555555" stroke-dasharray="6,4"/>'
        )
        if math.isfinite(h) and lo <= h <= hi:
            x = _f(xmap(h))
            c.parts.append(f'<circle cx="{x}" cy="{y}" r="3" fill="#555555"/>')
            c.parts.append(
                f'<text x="{x}" y="{_f(float(y) - 6)}" text-anchor="end">'
                f'{risk * 100:g}% risk: H0 = {h:.1f} m</text>'
            )
    return c.render()
