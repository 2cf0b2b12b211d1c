"""Self-contained SVG line charts with error bars and a log2 x axis.

Output is deterministic text (fixed ordering, fixed float formatting), so
identical data gives byte-identical files and figures diff cleanly next to
their CSVs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 62.0, 16.0, 34.0, 46.0


@dataclass(frozen=True)
class Series:
    label: str
    x: tuple[float, ...]
    y: tuple[float, ...]
    yerr: tuple[float, ...] = field(default=())


def _fmt(v: float) -> str:
    return format(float(v), ".6g")


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / (count - 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 0.5 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _pow2_label(x: float) -> str:
    k = round(math.log2(x))
    return f"2^{k}" if abs(2.0**k - x) < 1e-9 * max(x, 1.0) else _fmt(x)


def line_chart(
    series: list[Series],
    title: str,
    x_label: str,
    y_label: str,
    log2_x: bool = True,
    width: float = 640.0,
    height: float = 440.0,
) -> str:
    """Render one chart; points with NaN y are skipped."""
    xs = sorted({x for s in series for x in s.x})
    ys: list[float] = []
    for s in series:
        for y, e in zip(s.y, list(s.yerr) or [0.0] * len(s.y)):
            if not math.isnan(y):
                ys.extend([y - e, y + e])
    if not xs or not ys:
        raise ValueError("nothing to plot")

    tx = [math.log2(x) for x in xs] if log2_x else list(xs)
    x_lo, x_hi = min(tx), max(tx)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    y_ticks = _nice_ticks(min(min(ys), 0.0) if min(ys) >= 0 else min(ys), max(ys))
    y_lo, y_hi = y_ticks[0], y_ticks[-1]

    plot_w = width - _MARGIN_L - _MARGIN_R
    plot_h = height - _MARGIN_T - _MARGIN_B

    def px(x: float) -> float:
        v = math.log2(x) if log2_x else x
        return _MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return _MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        f'<rect width="{_fmt(width)}" height="{_fmt(height)}" fill="white"/>',
        f'<text x="{_fmt(width / 2)}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<rect x="{_fmt(_MARGIN_L)}" y="{_fmt(_MARGIN_T)}" width="{_fmt(plot_w)}" '
        f'height="{_fmt(plot_h)}" fill="none" stroke="black"/>',
    ]
    for x in xs:
        parts.append(
            f'<line x1="{_fmt(px(x))}" y1="{_fmt(_MARGIN_T + plot_h)}" '
            f'x2="{_fmt(px(x))}" y2="{_fmt(_MARGIN_T + plot_h + 5)}" stroke="black"/>'
        )
        label = _pow2_label(x) if log2_x else _fmt(x)
        parts.append(
            f'<text x="{_fmt(px(x))}" y="{_fmt(_MARGIN_T + plot_h + 18)}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">{label}</text>'
        )
    for t in y_ticks:
        parts.append(
            f'<line x1="{_fmt(_MARGIN_L - 5)}" y1="{_fmt(py(t))}" '
            f'x2="{_fmt(_MARGIN_L)}" y2="{_fmt(py(t))}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_fmt(_MARGIN_L - 8)}" y="{_fmt(py(t) + 4)}" '
            f'text-anchor="end" font-family="sans-serif" font-size="11">{_fmt(t)}</text>'
        )
    parts.append(
        f'<text x="{_fmt(_MARGIN_L + plot_w / 2)}" y="{_fmt(height - 8)}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="12">{x_label}</text>'
    )
    parts.append(
        f'<text x="14" y="{_fmt(_MARGIN_T + plot_h / 2)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {_fmt(_MARGIN_T + plot_h / 2)})">{y_label}</text>'
    )

    for si, s in enumerate(series):
        color = _PALETTE[si % len(_PALETTE)]
        pts = [
            (px(x), py(y))
            for x, y in zip(s.x, s.y)
            if not math.isnan(y)
        ]
        if len(pts) > 1:
            path = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        errs = list(s.yerr) or [0.0] * len(s.y)
        for x, y, e in zip(s.x, s.y, errs):
            if math.isnan(y):
                continue
            cx = px(x)
            parts.append(
                f'<circle cx="{_fmt(cx)}" cy="{_fmt(py(y))}" r="3" fill="{color}"/>'
            )
            if e > 0:
                lo, hi = py(y - e), py(y + e)
                parts.append(
                    f'<line x1="{_fmt(cx)}" y1="{_fmt(lo)}" x2="{_fmt(cx)}" '
                    f'y2="{_fmt(hi)}" stroke="{color}"/>'
                )
                for yy in (lo, hi):
                    parts.append(
                        f'<line x1="{_fmt(cx - 3)}" y1="{_fmt(yy)}" '
                        f'x2="{_fmt(cx + 3)}" y2="{_fmt(yy)}" stroke="{color}"/>'
                    )
        ly = _MARGIN_T + 14 + 16 * si
        lx = _MARGIN_L + plot_w - 130
        parts.append(
            f'<line x1="{_fmt(lx)}" y1="{_fmt(ly - 4)}" x2="{_fmt(lx + 18)}" '
            f'y2="{_fmt(ly - 4)}" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{_fmt(lx + 23)}" y="{_fmt(ly)}" font-family="sans-serif" '
            f'font-size="11">{s.label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
