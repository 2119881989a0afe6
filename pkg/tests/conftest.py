"""Shared fixtures: authored maps and session-cached barrier fits."""

from __future__ import annotations

import math

import pytest

from safeplan import inflate, load_map
from safeplan.barrier import fit_barriers

RES = 0.05
DS = 0.2


def make_ascii_map(width_m, height_m, res, origin, predicate):
    """ASCII map text whose cell (r, c) is occupied iff predicate(center) holds.

    Text rows run top to bottom, matching the on-disk format.
    """
    width = round(width_m / res)
    height = round(height_m / res)
    ox, oy = origin
    rows = []
    for r in range(height - 1, -1, -1):
        rows.append("".join(
            "#" if predicate(ox + (c + 0.5) * res, oy + (r + 0.5) * res) else "."
            for c in range(width)))
    header = f"{width} {height} {res} {origin[0]} {origin[1]}"
    return header + "\n" + "\n".join(rows) + "\n"


def grid_from_predicate(width_m, height_m, predicate, res=RES, origin=(0.0, 0.0)):
    text = make_ascii_map(width_m, height_m, res, origin, predicate)
    return load_map(text.encode(), "ascii")


def seg_dist(px, py, ax, ay, bx, by):
    vx, vy = bx - ax, by - ay
    t = max(0.0, min(1.0, ((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy)))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


# --- authored obstacle predicates -------------------------------------------

def rect_obstacle(x, y):
    return 3.5 <= x <= 5.5 and 3.0 <= y <= 4.5


def lshape_obstacle(x, y):
    # concave L: two capsule arms sharing an elbow at (4.2, 3.6)
    d = min(seg_dist(x, y, 4.2, 3.6, 5.8, 3.6), seg_dist(x, y, 4.2, 3.6, 4.2, 5.0))
    return d <= 0.6


def three_obstacles(x, y):
    return ((1.5 <= x <= 3.0 and 4.5 <= y <= 6.0)
            or (abs(x - 4.5) + abs(y - 4.1) <= 0.9)
            or (5.8 <= x <= 7.2 and 1.6 <= y <= 2.8))


def room_obstacle(x, y):
    if 0.7 <= x <= 7.3 and (y <= 0.2 or y >= 5.8):
        return True
    if 0.7 <= y <= 5.3 and (x <= 0.2 or x >= 7.8):
        return True
    if 4.4 <= x <= 5.2 and 4.1 <= y <= 5.1:
        return True
    if 4.4 <= x <= 5.2 and 1.7 <= y <= 2.7:
        return True
    return False


TABLE1_START = (0.9, 0.8)
TABLE1_GOAL = (7.45, 6.8)
TABLE2_START = (6.5, 4.0)
TABLE2_GOAL = (3.6, 3.0)
TABLE2_DS = 0.15
TABLE2_V = 0.1


# --- session-scoped grids and fits ------------------------------------------

@pytest.fixture(scope="session")
def rect_grid():
    return grid_from_predicate(10, 8, rect_obstacle)


@pytest.fixture(scope="session")
def lshape_grid():
    return grid_from_predicate(10, 8, lshape_obstacle)


@pytest.fixture(scope="session")
def three_grid():
    return grid_from_predicate(10, 8, three_obstacles)


@pytest.fixture(scope="session")
def room_grid():
    return grid_from_predicate(8, 6, room_obstacle)


@pytest.fixture(scope="session")
def rect_fit(rect_grid):
    return fit_barriers(rect_grid, DS, RES)


@pytest.fixture(scope="session")
def rect_barrier(rect_fit):
    (bf, _), = rect_fit
    return bf


@pytest.fixture(scope="session")
def lshape_fit(lshape_grid):
    return fit_barriers(lshape_grid, DS, RES)


@pytest.fixture(scope="session")
def three_fit(three_grid):
    return fit_barriers(three_grid, DS, RES)


@pytest.fixture(scope="session")
def room_fit(room_grid):
    return fit_barriers(room_grid, TABLE2_DS, RES)


@pytest.fixture(scope="session")
def rect_inflated(rect_grid):
    return inflate(rect_grid, DS)
