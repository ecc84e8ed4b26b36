"""Direct SVG emission for scatter panels and line plots.

Plots are built from raw primitives (circles, ellipses, polylines) so the
package needs no plotting dependency; a CSV sits next to every figure for
external tooling.
"""

from __future__ import annotations

import numpy as np

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _transform(extent, size, margin):
    (x0, x1), (y0, y1) = extent
    span_x = x1 - x0 or 1.0
    span_y = y1 - y0 or 1.0
    inner = size - 2 * margin

    def to_px(p):
        x = margin + (p[0] - x0) / span_x * inner
        y = size - margin - (p[1] - y0) / span_y * inner
        return x, y

    return to_px


def scatter_svg(path, point_sets, ellipses=(), title: str = "", size: int = 480,
                extent=None) -> None:
    """Write a scatter panel.

    ``point_sets`` is a list of (points (n, 2), color or None, radius);
    ``ellipses`` a list of (mean, covariance) drawn as three-sigma outlines.
    Points outside ``extent`` are clipped by the viewport.
    """
    margin = 30
    if extent is None:
        all_pts = np.vstack([np.atleast_2d(p) for p, _, _ in point_sets if len(p)])
        lo = np.percentile(all_pts, 1, axis=0)
        hi = np.percentile(all_pts, 99, axis=0)
        pad = 0.15 * np.maximum(hi - lo, 1e-9)
        extent = ((lo[0] - pad[0], hi[0] + pad[0]), (lo[1] - pad[1], hi[1] + pad[1]))
    to_px = _transform(extent, size, margin)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<clipPath id="plot"><rect x="{margin}" y="{margin}" '
        f'width="{size - 2 * margin}" height="{size - 2 * margin}"/></clipPath>',
        f'<rect x="{margin}" y="{margin}" width="{size - 2 * margin}" '
        f'height="{size - 2 * margin}" fill="none" stroke="#444"/>',
    ]
    if title:
        parts.append(f'<text x="{size / 2}" y="{margin - 10}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="14">{title}</text>')
    parts.append('<g clip-path="url(#plot)">')
    for mean, cov in ellipses:
        vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=np.float64))
        angle = np.degrees(np.arctan2(vecs[1, 1], vecs[0, 1]))
        cx, cy = to_px(mean)
        span_px = (size - 2 * margin)
        sx = span_px / (extent[0][1] - extent[0][0])
        sy = span_px / (extent[1][1] - extent[1][0])
        rx = 3 * np.sqrt(max(vals[1], 0.0)) * sx
        ry = 3 * np.sqrt(max(vals[0], 0.0)) * sy
        parts.append(
            f'<ellipse cx="{cx:.2f}" cy="{cy:.2f}" rx="{rx:.2f}" ry="{ry:.2f}" '
            f'fill="none" stroke="#333" stroke-dasharray="4 3" '
            f'transform="rotate({-angle:.2f} {cx:.2f} {cy:.2f})"/>')
    for i, (points, color, radius) in enumerate(point_sets):
        color = color or _PALETTE[i % len(_PALETTE)]
        for p in np.atleast_2d(points):
            x, y = to_px(p)
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="{radius}" '
                         f'fill="{color}" fill-opacity="0.5"/>')
    parts.append("</g></svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))


def line_svg(path, x, series, title: str = "", size: int = 520,
             log_y: bool = False) -> None:
    """Write a line plot; ``series`` is a list of (ys, label)."""
    margin = 45
    x = np.asarray(x, dtype=np.float64)
    ys_all = np.concatenate([np.asarray(ys, dtype=np.float64) for ys, _ in series])
    if log_y:
        ys_all = np.log10(np.maximum(ys_all, 1e-300))
    lo, hi = float(ys_all.min()), float(ys_all.max())
    if hi == lo:
        hi = lo + 1.0
    extent = ((float(x.min()), float(x.max()) or 1.0), (lo, hi))
    to_px = _transform(extent, size, margin)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{size - 2 * margin}" '
        f'height="{size - 2 * margin}" fill="none" stroke="#444"/>',
    ]
    if title:
        parts.append(f'<text x="{size / 2}" y="{margin - 12}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="14">{title}</text>')
    for i, (ys, label) in enumerate(series):
        ys = np.asarray(ys, dtype=np.float64)
        if log_y:
            ys = np.log10(np.maximum(ys, 1e-300))
        pts = " ".join(f"{to_px((xi, yi))[0]:.1f},{to_px((xi, yi))[1]:.1f}"
                       for xi, yi in zip(x, ys))
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{size - margin - 5}" y="{margin + 16 + 16 * i}" '
                     f'text-anchor="end" font-family="sans-serif" font-size="12" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
