"""Minimal hand-emitted SVG boxplots (no plotting dependency)."""

from __future__ import annotations

import numpy as np

WIDTH = 640
HEIGHT = 420
MARGIN_L = 60
MARGIN_B = 60
MARGIN_T = 40
MARGIN_R = 20


def _quartiles(values: np.ndarray):
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    lo = float(values[values >= q1 - 1.5 * iqr].min())
    hi = float(values[values <= q3 + 1.5 * iqr].max())
    return lo, float(q1), float(med), float(q3), hi


def boxplot_svg(groups: dict[str, list[float]], title: str,
                ylabel: str) -> str:
    """One box per group (insertion order), whiskers at 1.5 IQR."""
    names = list(groups)
    stats = {k: _quartiles(np.asarray(v, dtype=np.float64)) for k, v in
             groups.items() if len(v)}
    if not stats:
        raise ValueError("no data to plot")
    y_lo = min(s[0] for s in stats.values())
    y_hi = max(s[4] for s in stats.values())
    pad = 0.05 * (y_hi - y_lo) or 0.05
    y_lo, y_hi = y_lo - pad, y_hi + pad

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B
    slot = plot_w / max(len(names), 1)
    box_w = 0.5 * slot

    def ypix(v: float) -> float:
        return MARGIN_T + plot_h * (y_hi - v) / (y_hi - y_lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="{MARGIN_T / 2 + 6}" text-anchor="middle" '
        f'font-size="16" font-family="sans-serif">{title}</text>',
        f'<text x="16" y="{MARGIN_T + plot_h / 2}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif" '
        f'transform="rotate(-90 16 {MARGIN_T + plot_h / 2})">{ylabel}</text>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
        f'y2="{MARGIN_T + plot_h}" stroke="black"/>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T + plot_h}" '
        f'x2="{MARGIN_L + plot_w}" y2="{MARGIN_T + plot_h}" stroke="black"/>',
    ]
    for tick in np.linspace(y_lo, y_hi, 6):
        y = ypix(float(tick))
        parts.append(f'<line x1="{MARGIN_L - 4}" y1="{y:.1f}" '
                     f'x2="{MARGIN_L}" y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{MARGIN_L - 8}" y="{y + 4:.1f}" '
                     f'text-anchor="end" font-size="10" '
                     f'font-family="sans-serif">{tick:.3g}</text>')
    for i, name in enumerate(names):
        if name not in stats:
            continue
        lo, q1, med, q3, hi = stats[name]
        cx = MARGIN_L + (i + 0.5) * slot
        x0, x1 = cx - box_w / 2, cx + box_w / 2
        parts.extend([
            f'<line x1="{cx:.1f}" y1="{ypix(lo):.1f}" x2="{cx:.1f}" '
            f'y2="{ypix(q1):.1f}" stroke="black"/>',
            f'<line x1="{cx:.1f}" y1="{ypix(q3):.1f}" x2="{cx:.1f}" '
            f'y2="{ypix(hi):.1f}" stroke="black"/>',
            f'<line x1="{x0:.1f}" y1="{ypix(lo):.1f}" x2="{x1:.1f}" '
            f'y2="{ypix(lo):.1f}" stroke="black"/>',
            f'<line x1="{x0:.1f}" y1="{ypix(hi):.1f}" x2="{x1:.1f}" '
            f'y2="{ypix(hi):.1f}" stroke="black"/>',
            f'<rect x="{x0:.1f}" y="{ypix(q3):.1f}" width="{box_w:.1f}" '
            f'height="{ypix(q1) - ypix(q3):.1f}" fill="#9ecae1" '
            f'stroke="black"/>',
            f'<line x1="{x0:.1f}" y1="{ypix(med):.1f}" x2="{x1:.1f}" '
            f'y2="{ypix(med):.1f}" stroke="black" stroke-width="2"/>',
            f'<text x="{cx:.1f}" y="{MARGIN_T + plot_h + 16}" '
            f'text-anchor="middle" font-size="11" '
            f'font-family="sans-serif">{name}</text>',
        ])
    parts.append('</svg>')
    return "\n".join(parts)
