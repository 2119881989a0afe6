"""Occupancy grid maps: loading, inflation, lattice sampling, regions, collision checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

FREE_CHAR = "."
OCCUPIED_CHAR = "#"


class MapFormatError(ValueError):
    """A map file could not be parsed into a valid occupancy grid."""


@dataclass(frozen=True)
class OccupancyGrid:
    """Binary occupancy grid with metric resolution.

    ``cells[row, col]`` is True where the cell is occupied. Column indexes x1,
    row indexes x2; cell (0, 0) has its lower-left corner at ``origin``. World
    coordinates are half-open: a point belongs to the map if
    ``origin <= p < origin + extent``.
    """

    width: int
    height: int
    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise MapFormatError("empty map")
        if self.resolution <= 0:
            raise MapFormatError(f"resolution must be > 0, got {self.resolution}")
        if self.cells.shape != (self.height, self.width):
            raise MapFormatError(
                f"cell array shape {self.cells.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if self.cells.dtype != np.bool_:
            object.__setattr__(self, "cells", self.cells.astype(bool))
        self.cells.setflags(write=False)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """World bounds (x0, y0, x1, y1)."""
        ox, oy = self.origin
        return ox, oy, ox + self.width * self.resolution, oy + self.height * self.resolution

    def contains(self, x1: float, x2: float) -> bool:
        x0, y0, x1b, y1b = self.bounds
        return x0 <= x1 < x1b and y0 <= x2 < y1b

    def world_to_cell(self, x1: float, x2: float) -> tuple[int, int]:
        """(row, col) of the cell containing the point. Point must be in bounds."""
        if not self.contains(x1, x2):
            raise ValueError(f"point ({x1}, {x2}) outside map bounds {self.bounds}")
        col = int(math.floor((x1 - self.origin[0]) / self.resolution))
        row = int(math.floor((x2 - self.origin[1]) / self.resolution))
        return row, col

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin[0] + (col + 0.5) * self.resolution,
            self.origin[1] + (row + 0.5) * self.resolution,
        )

    def is_free(self, x1: float, x2: float) -> bool:
        row, col = self.world_to_cell(x1, x2)
        return not self.cells[row, col]


@dataclass(frozen=True)
class LabeledSample:
    """Lattice point with a binary occupancy label (1 = free, 0 = occupied)."""

    position: tuple[float, float]
    label: int


@dataclass(frozen=True)
class Region:
    """One 8-connected component of occupied cells.

    ``cell_set`` holds (row, col) indices; ``bounding_box`` is the world
    rectangle (x0, y0, x1, y1) spanned by the component's cells.
    """

    id: int
    cell_set: frozenset[tuple[int, int]]
    bounding_box: tuple[float, float, float, float]


def load_map(source: bytes, fmt: str, meta: str | None = None) -> OccupancyGrid:
    """Parse a map byte stream.

    Supported formats:

    ``ascii``
        First line ``W H resolution origin_x origin_y``; then H lines of W
        characters, ``.`` free and ``#`` occupied. The first character line is
        the top row of the map (largest x2).

    ``pgm``
        Plain PGM (magic ``P2``). Values below 50% of maxval are occupied.
        Requires ``meta``: ``key = value`` lines carrying ``resolution`` and
        optionally ``origin_x`` / ``origin_y`` (default 0). The first raster
        row is the top of the map.
    """
    if fmt == "ascii":
        return _load_ascii(source.decode("ascii"))
    if fmt == "pgm":
        if meta is None:
            raise MapFormatError("pgm format requires a metadata sidecar")
        return _load_pgm(source, meta)
    raise MapFormatError(f"unsupported map format: {fmt!r}")


def load_map_file(path: str) -> OccupancyGrid:
    """Load a map from a file path, inferring format from the extension.

    ``.pgm`` files read resolution/origin from a ``<path>.meta`` sidecar;
    anything else is treated as the ASCII format.
    """
    with open(path, "rb") as f:
        data = f.read()
    if str(path).endswith(".pgm"):
        with open(f"{path}.meta", "r") as f:
            meta = f.read()
        return load_map(data, "pgm", meta)
    return load_map(data, "ascii")


def _load_ascii(text: str) -> OccupancyGrid:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise MapFormatError("missing header line")
    header = lines[0].split()
    if len(header) != 5:
        raise MapFormatError(f"malformed header (expected 5 fields): {lines[0]!r}")
    try:
        width, height = int(header[0]), int(header[1])
        resolution, ox, oy = float(header[2]), float(header[3]), float(header[4])
    except ValueError as exc:
        raise MapFormatError(f"malformed header: {lines[0]!r}") from exc
    if width <= 0 or height <= 0:
        raise MapFormatError("empty map")
    rows = [ln.rstrip("\r") for ln in lines[1:] if ln.strip() != ""]
    if len(rows) != height:
        raise MapFormatError(f"expected {height} map rows, found {len(rows)}")
    cells = np.zeros((height, width), dtype=bool)
    for k, row_text in enumerate(rows):
        if len(row_text) != width:
            raise MapFormatError(f"row {k} has {len(row_text)} cells, expected {width}")
        bad = set(row_text) - {FREE_CHAR, OCCUPIED_CHAR}
        if bad:
            raise MapFormatError(f"row {k} contains invalid characters {sorted(bad)}")
        # text rows are top-to-bottom; row 0 of the grid is the bottom
        cells[height - 1 - k, :] = [c == OCCUPIED_CHAR for c in row_text]
    return OccupancyGrid(width, height, resolution, (ox, oy), cells)


def _load_pgm(data: bytes, meta: str) -> OccupancyGrid:
    tokens = []
    for raw_line in data.split(b"\n"):
        line = raw_line.split(b"#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != b"P2":
        raise MapFormatError("not a plain PGM (P2) stream")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
        values = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise MapFormatError("malformed PGM header or raster") from exc
    if width <= 0 or height <= 0:
        raise MapFormatError("empty map")
    if maxval <= 0:
        raise MapFormatError(f"invalid maxval {maxval}")
    if values.size != width * height:
        raise MapFormatError(f"expected {width * height} raster values, found {values.size}")
    kv = _parse_sidecar(meta)
    try:
        resolution = float(kv["resolution"])
    except KeyError as exc:
        raise MapFormatError("sidecar missing 'resolution'") from exc
    ox = float(kv.get("origin_x", 0.0))
    oy = float(kv.get("origin_y", 0.0))
    occupied = values.reshape(height, width) < 0.5 * maxval
    return OccupancyGrid(width, height, resolution, (ox, oy), occupied[::-1, :].copy())


def _parse_sidecar(meta: str) -> dict[str, str]:
    kv: dict[str, str] = {}
    for line in meta.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MapFormatError(f"malformed sidecar line: {line!r}")
        key, value = line.split("=", 1)
        kv[key.strip()] = value.strip()
    return kv


def inflate(grid: OccupancyGrid, ds: float) -> OccupancyGrid:
    """Expand occupied cells by safety distance ``ds`` (meters).

    A cell becomes occupied if its center lies within Euclidean distance ``ds``
    of the center of any originally occupied cell (disc-kernel dilation).
    ``ds = 0`` is the identity.
    """
    if ds < 0:
        raise ValueError(f"safety distance must be >= 0, got {ds}")
    r = ds / grid.resolution
    radius = int(math.floor(r + 1e-9))
    if radius == 0:
        return grid
    offs = np.arange(-radius, radius + 1)
    di, dj = np.meshgrid(offs, offs, indexing="ij")
    kernel = di * di + dj * dj <= r * r + 1e-9
    dilated = ndimage.binary_dilation(grid.cells, structure=kernel)
    return OccupancyGrid(grid.width, grid.height, grid.resolution, grid.origin, dilated)


def sample_labels(grid: OccupancyGrid, spacing: float) -> list[LabeledSample]:
    """Sample a regular lattice over the map and label each point by occupancy.

    The first lattice point sits at ``origin + spacing/2`` per axis, so with
    ``spacing == resolution`` the samples coincide with cell centers. Label is
    1 iff the containing cell is free.
    """
    x0, y0, x1, y1 = grid.bounds
    if spacing <= 0:
        raise ValueError(f"spacing must be > 0, got {spacing}")
    if spacing > min(x1 - x0, y1 - y0):
        raise ValueError(f"spacing {spacing} exceeds map dimensions")
    nx = int(math.floor((x1 - x0) / spacing - 0.5 + 1e-9)) + 1
    ny = int(math.floor((y1 - y0) / spacing - 0.5 + 1e-9)) + 1
    xs = x0 + spacing / 2 + spacing * np.arange(nx)
    ys = y0 + spacing / 2 + spacing * np.arange(ny)
    cols = np.floor((xs - x0) / grid.resolution).astype(int)
    rows = np.floor((ys - y0) / grid.resolution).astype(int)
    occ = grid.cells[np.ix_(rows, cols)]
    out = []
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            out.append(LabeledSample((float(x), float(y)), 0 if occ[iy, ix] else 1))
    return out


def partition_regions(grid: OccupancyGrid) -> list[Region]:
    """Split occupied cells into 8-connected components."""
    labels, count = ndimage.label(grid.cells, structure=np.ones((3, 3), dtype=bool))
    regions = []
    for rid in range(1, count + 1):
        rows, cols = np.nonzero(labels == rid)
        ox, oy = grid.origin
        res = grid.resolution
        bbox = (
            float(ox + cols.min() * res),
            float(oy + rows.min() * res),
            float(ox + (cols.max() + 1) * res),
            float(oy + (rows.max() + 1) * res),
        )
        cell_set = frozenset(zip(rows.tolist(), cols.tolist()))
        regions.append(Region(rid, cell_set, bbox))
    return regions


def segment_collision_free(
    grid: OccupancyGrid, p: tuple[float, float], q: tuple[float, float]
) -> bool:
    """True iff every sample on segment pq (stride <= resolution/2) is free.

    Endpoints must lie inside the map. The sample set is identical for (p, q)
    and (q, p), so the check is exactly symmetric.
    """
    for point in (p, q):
        if not grid.contains(*point):
            raise ValueError(f"segment endpoint {point} outside map bounds")
    if (q[0], q[1]) < (p[0], p[1]):
        p, q = q, p
    px, py = p
    dx, dy = q[0] - px, q[1] - py
    length = math.hypot(dx, dy)
    n = max(1, int(math.ceil(length / (grid.resolution / 2))))
    ts = np.linspace(0.0, 1.0, n + 1)
    xs = px + ts * dx
    ys = py + ts * dy
    ox, oy = grid.origin
    cols = np.floor((xs - ox) / grid.resolution).astype(int)
    rows = np.floor((ys - oy) / grid.resolution).astype(int)
    np.clip(cols, 0, grid.width - 1, out=cols)
    np.clip(rows, 0, grid.height - 1, out=rows)
    return not grid.cells[rows, cols].any()
