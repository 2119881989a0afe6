"""Deterministic SVG rendering of maps, barrier contours, trees, paths, trajectories.

The barrier zero level sets are extracted with marching squares over the map's
cell-corner lattice, interpolating linearly along cell edges. Output bytes are
a pure function of the inputs: floats are formatted with a fixed precision and
layers are emitted in a fixed order.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .barrier import BarrierFunction, feature_matrix
from .gridmap import OccupancyGrid

Segment = tuple[tuple[float, float], tuple[float, float]]

LAYER_COLORS = {
    "occupancy": "#404040",
    "barriers": "#d62728",
    "tree": "#9ecae1",
    "path": "#2ca02c",
    "trajectory": "#ff7f0e",
}


def marching_squares(values: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> list[Segment]:
    """Zero-level-set segments of a scalar field sampled on a rectangular lattice.

    ``values[i, j]`` is the field at (xs[j], ys[i]). Saddle cells are split by
    the sign of the cell's mean corner value. Vertices are linear zero
    crossings along cell edges.
    """
    segments: list[Segment] = []
    pos = values > 0.0

    def cross(x0, y0, v0, x1, y1, v1):
        t = v0 / (v0 - v1)
        return (x0 + t * (x1 - x0), y0 + t * (y1 - y0))

    for i in range(values.shape[0] - 1):
        for j in range(values.shape[1] - 1):
            v00, v01 = values[i, j], values[i, j + 1]
            v10, v11 = values[i + 1, j], values[i + 1, j + 1]
            case = (pos[i, j] | pos[i, j + 1] << 1 | pos[i + 1, j + 1] << 2
                    | pos[i + 1, j] << 3)
            if case in (0, 15):
                continue
            x0, x1 = xs[j], xs[j + 1]
            y0, y1 = ys[i], ys[i + 1]
            bottom = cross(x0, y0, v00, x1, y0, v01)
            top = cross(x0, y1, v10, x1, y1, v11)
            left = cross(x0, y0, v00, x0, y1, v10)
            right = cross(x1, y0, v01, x1, y1, v11)
            if case in (1, 14):
                segments.append((bottom, left))
            elif case in (2, 13):
                segments.append((bottom, right))
            elif case in (3, 12):
                segments.append((left, right))
            elif case in (4, 11):
                segments.append((top, right))
            elif case in (6, 9):
                segments.append((bottom, top))
            elif case in (7, 8):
                segments.append((top, left))
            elif case in (5, 10):
                center_positive = (v00 + v01 + v10 + v11) > 0.0
                if (case == 5) == center_positive:
                    segments.append((bottom, right))
                    segments.append((top, left))
                else:
                    segments.append((bottom, left))
                    segments.append((top, right))
    return segments


def barrier_contours(bf: BarrierFunction, grid: OccupancyGrid) -> list[Segment]:
    """Zero-level-set segments of a barrier over the map's cell-corner lattice."""
    xs = grid.origin[0] + grid.resolution * np.arange(grid.width + 1)
    ys = grid.origin[1] + grid.resolution * np.arange(grid.height + 1)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack((gx.ravel(), gy.ravel()))
    values = (feature_matrix(pts) @ bf.beta).reshape(len(ys), len(xs))
    return marching_squares(values, xs, ys)


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def _occupancy_rects(grid: OccupancyGrid) -> list[tuple[float, float, float, float]]:
    """Merge occupied cell runs per row into (x, y, w, h) rectangles."""
    rects = []
    res = grid.resolution
    ox, oy = grid.origin
    for row in range(grid.height):
        cells = grid.cells[row]
        col = 0
        while col < grid.width:
            if cells[col]:
                start = col
                while col < grid.width and cells[col]:
                    col += 1
                rects.append((ox + start * res, oy + row * res, (col - start) * res, res))
            else:
                col += 1
    return rects


def render_svg(grid: OccupancyGrid,
               barriers: Sequence[BarrierFunction] | None = None,
               tree_edges: Iterable[tuple[float, float, float, float]] | None = None,
               path_points: Sequence[tuple[float, float]] | None = None,
               traj_points: Sequence[tuple[float, float]] | None = None,
               pixels_per_meter: float = 80.0) -> str:
    """Compose the SVG document. Layers beyond the map are optional.

    World y points up; the document flips it so the map renders upright.
    """
    x0, y0, x1, y1 = grid.bounds
    w_m, h_m = x1 - x0, y1 - y0

    def pt(x: float, y: float) -> tuple[float, float]:
        return x - x0, y1 - y

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(w_m * pixels_per_meter)}" '
        f'height="{_fmt(h_m * pixels_per_meter)}" viewBox="0 0 {_fmt(w_m)} {_fmt(h_m)}">',
        f'<rect x="0" y="0" width="{_fmt(w_m)}" height="{_fmt(h_m)}" fill="#ffffff"/>',
    ]

    parts.append(f'<g id="occupancy" fill="{LAYER_COLORS["occupancy"]}">')
    for rx, ry, rw, rh in _occupancy_rects(grid):
        px, py = pt(rx, ry + rh)
        parts.append(f'<rect x="{_fmt(px)}" y="{_fmt(py)}" width="{_fmt(rw)}" height="{_fmt(rh)}"/>')
    parts.append("</g>")

    if barriers:
        parts.append(f'<g id="barriers" stroke="{LAYER_COLORS["barriers"]}" '
                     'stroke-width="0.03" fill="none">')
        for bf in barriers:
            for (ax, ay), (bx, by) in barrier_contours(bf, grid):
                pa, pb = pt(ax, ay), pt(bx, by)
                parts.append(f'<line x1="{_fmt(pa[0])}" y1="{_fmt(pa[1])}" '
                             f'x2="{_fmt(pb[0])}" y2="{_fmt(pb[1])}"/>')
        parts.append("</g>")

    if tree_edges is not None:
        parts.append(f'<g id="tree" stroke="{LAYER_COLORS["tree"]}" '
                     'stroke-width="0.015" fill="none">')
        for ax, ay, bx, by in tree_edges:
            pa, pb = pt(ax, ay), pt(bx, by)
            parts.append(f'<line x1="{_fmt(pa[0])}" y1="{_fmt(pa[1])}" '
                         f'x2="{_fmt(pb[0])}" y2="{_fmt(pb[1])}"/>')
        parts.append("</g>")

    for name, pts_list, width in (("path", path_points, 0.04), ("trajectory", traj_points, 0.025)):
        if pts_list is None:
            continue
        coords = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in (pt(x, y) for x, y in pts_list))
        parts.append(f'<g id="{name}" stroke="{LAYER_COLORS[name]}" '
                     f'stroke-width="{width}" fill="none">')
        parts.append(f'<polyline points="{coords}"/>')
        parts.append("</g>")

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
