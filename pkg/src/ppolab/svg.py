"""Tiny self-contained SVG plots: line charts and density heatmaps."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

W, H, PAD = 640, 360, 48
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _frame(title, xlabel, ylabel, x0, x1, y0, y1):
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="12" y="{H / 2}" transform="rotate(-90 12 {H / 2})" text-anchor="middle">{escape(ylabel)}</text>',
        f'<rect x="{PAD}" y="{PAD - 20}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="#444"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        px = PAD + frac * (W - 2 * PAD)
        py = H - PAD - 20 - frac * (H - 2 * PAD) + 20
        parts.append(f'<text x="{px:.1f}" y="{H - PAD + 14}" text-anchor="middle">{xv:.3g}</text>')
        parts.append(f'<text x="{PAD - 4}" y="{py:.1f}" text-anchor="end">{yv:.3g}</text>')
    return parts


def _project(x, y, x0, x1, y0, y1):
    sx = (W - 2 * PAD) / ((x1 - x0) or 1.0)
    sy = (H - 2 * PAD) / ((y1 - y0) or 1.0)
    return PAD + (x - x0) * sx, H - PAD - (y - y0) * sy


def line_plot(series: dict, title: str, xlabel: str = "iteration", ylabel: str = "") -> str:
    """``series`` maps label -> (x, y)."""
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    ok = np.isfinite(ys)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(ys[ok].min()), float(ys[ok].max())) if ok.any() else (0.0, 1.0)
    if y0 == y1:
        y0, y1 = y0 - 0.5, y1 + 0.5
    parts = _frame(title, xlabel, ylabel, x0, x1, y0, y1)
    for i, (label, (x, y)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = [_project(a, b, x0, x1, y0, y1) for a, b in zip(x, y) if np.isfinite(b)]
        if pts:
            d = " ".join(f"{px:.1f},{py:.1f}" for px, py in pts)
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{d}"/>')
        if len(series) <= 8:
            parts.append(f'<text x="{W - PAD + 4}" y="{PAD + 12 * i}" fill="{color}">{escape(str(label))}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap(matrix, extent, title: str, xlabel: str = "iteration", ylabel: str = "action") -> str:
    """Rows are iterations, columns are grid points; each row scaled by the run's max."""
    m = np.asarray(matrix, dtype=float)
    peak = np.nanmax(m) if np.isfinite(m).any() else 1.0
    m = np.nan_to_num(m / (peak or 1.0))
    (x0, x1), (y0, y1) = extent
    parts = _frame(title + " (color: density / run max)", xlabel, ylabel, x0, x1, y0, y1)
    n_it, n_pts = m.shape
    cw = (W - 2 * PAD) / n_it
    ch = (H - 2 * PAD) / n_pts
    for i in range(n_it):
        for j in range(n_pts):
            v = m[i, j]
            if v <= 0.005:
                continue
            shade = int(255 * (1.0 - v))
            x = PAD + i * cw
            y = H - PAD - (j + 1) * ch
            parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cw + 0.3:.1f}" height="{ch + 0.3:.1f}" '
                         f'fill="rgb({shade},{shade},255)"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write(path, text: str):
    with open(path, "w") as fh:
        fh.write(text)
