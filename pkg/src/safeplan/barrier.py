"""Polynomial barrier functions fitted to obstacle regions by logistic regression.

A barrier is a degree-4 bivariate polynomial h(x1, x2) = beta . z(x1, x2) whose
zero level set separates free space (h > 0) from one occupied region (h < 0).
The coefficients come from minimizing the binary cross-entropy of a sigmoid
classifier over labeled lattice samples, solved with BFGS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gridmap import LabeledSample, OccupancyGrid, Region, partition_regions, sample_labels

# Monomial exponents (i, j) for x1^i * x2^j, ordered by total degree then by
# descending x1 exponent. Constant term first. This order is the serialization
# contract for barrier files.
EXPONENT_PAIRS: tuple[tuple[int, int], ...] = (
    (0, 0),
    (1, 0), (0, 1),
    (2, 0), (1, 1), (0, 2),
    (3, 0), (2, 1), (1, 2), (0, 3),
    (4, 0), (3, 1), (2, 2), (1, 3), (0, 4),
)
NUM_FEATURES = len(EXPONENT_PAIRS)

_I = np.array([i for i, _ in EXPONENT_PAIRS])
_J = np.array([j for _, j in EXPONENT_PAIRS])
_INDEX = {pair: k for k, pair in enumerate(EXPONENT_PAIRS)}


class FitError(ValueError):
    """A region's samples cannot support a barrier fit."""


@dataclass(frozen=True)
class BarrierFunction:
    """Fitted barrier for one region: h(x) = beta . z(x) in world coordinates.

    ``window`` is the world rectangle (x0, y0, x1, y1) whose samples trained
    the fit; the polynomial is only trusted near it.
    """

    beta: np.ndarray
    region_id: int
    window: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != (NUM_FEATURES,):
            raise ValueError(f"beta must have {NUM_FEATURES} coefficients")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        object.__setattr__(self, "beta", beta)
        beta.setflags(write=False)


@dataclass(frozen=True)
class FitReport:
    final_cost: float
    iterations: int
    converged: bool
    train_accuracy: float


def features(x1: float, x2: float) -> np.ndarray:
    """Degree-4 monomial vector z(x1, x2), component k = x1^i_k * x2^j_k."""
    p1 = _powers(x1)
    p2 = _powers(x2)
    return p1[_I] * p2[_J]


def features_gradient(x1: float, x2: float) -> tuple[np.ndarray, np.ndarray]:
    """Analytic partials (dz/dx1, dz/dx2) of the monomial vector."""
    p1 = _powers(x1)
    p2 = _powers(x2)
    d1 = _I * p1[np.maximum(_I - 1, 0)] * p2[_J]
    d2 = _J * p1[_I] * p2[np.maximum(_J - 1, 0)]
    return d1, d2


def features_hessian(x1: float, x2: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic second partials (d2z/dx1^2, d2z/dx1dx2, d2z/dx2^2)."""
    p1 = _powers(x1)
    p2 = _powers(x2)
    d11 = _I * (_I - 1) * p1[np.maximum(_I - 2, 0)] * p2[_J]
    d12 = _I * _J * p1[np.maximum(_I - 1, 0)] * p2[np.maximum(_J - 1, 0)]
    d22 = _J * (_J - 1) * p1[_I] * p2[np.maximum(_J - 2, 0)]
    return d11, d12, d22


def feature_matrix(points: np.ndarray) -> np.ndarray:
    """Feature vectors for an (N, 2) array of points, as an (N, 15) matrix."""
    pts = np.asarray(points, dtype=float)
    p1 = pts[:, 0:1] ** np.arange(5)
    p2 = pts[:, 1:2] ** np.arange(5)
    return p1[:, _I] * p2[:, _J]


def _powers(x: float) -> np.ndarray:
    x2 = x * x
    return np.array([1.0, x, x2, x2 * x, x2 * x2])


def eval_h(bf: BarrierFunction, x1: float, x2: float) -> float:
    """Barrier value h(x1, x2) = beta . z(x1, x2)."""
    return float(np.dot(bf.beta, features(x1, x2)))


def eval_h_many(bf: BarrierFunction, points: np.ndarray) -> np.ndarray:
    """Barrier values at an (N, 2) array of points."""
    return feature_matrix(points) @ bf.beta


def logistic_cost(beta: np.ndarray, samples: list[LabeledSample]) -> tuple[float, np.ndarray]:
    """Binary cross-entropy sum(ln(1 + e^t) - y t) and its gradient in beta.

    t_i = beta . z(p_i). Uses the log1p/exp formulation, stable for |t| up to
    ~1e3. Gradient is sum((sigmoid(t_i) - y_i) z_i).
    """
    if not samples:
        raise ValueError("samples must be non-empty")
    pts = np.array([s.position for s in samples])
    y = np.array([s.label for s in samples], dtype=float)
    return _cost_grad(np.asarray(beta, dtype=float), feature_matrix(pts), y)


def _cost_grad(beta: np.ndarray, Z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    t = Z @ beta
    cost = float(np.sum(np.logaddexp(0.0, t) - y * t))
    sig = _sigmoid(t)
    grad = Z.T @ (sig - y)
    return cost, grad


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _bfgs(fg, x0: np.ndarray, max_iter: int = 500, gtol: float = 1e-6,
          c1: float = 1e-4, shrink: float = 0.5):
    """Minimize fg (returning (cost, grad)) by BFGS with Armijo backtracking.

    Returns (x, cost_history, iterations, converged). cost_history holds the
    cost at x0 and after each accepted step; accepted steps strictly decrease
    it (Armijo sufficient-decrease condition).
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    H = np.eye(n)
    f, g = fg(x)
    history = [f]
    for k in range(1, max_iter + 1):
        if np.linalg.norm(g) <= gtol:
            return x, history, k - 1, True
        p = -H @ g
        gtp = float(np.dot(g, p))
        if gtp >= 0:
            # curvature updates went bad; restart on steepest descent
            H = np.eye(n)
            p = -g
            gtp = -float(np.dot(g, g))
        alpha = 1.0
        f_new = g_new = None
        for _ in range(60):
            trial = x + alpha * p
            f_try, g_try = fg(trial)
            if f_try <= f + c1 * alpha * gtp:
                f_new, g_new = f_try, g_try
                break
            alpha *= shrink
        if f_new is None:
            return x, history, k - 1, False
        s = alpha * p
        yk = g_new - g
        sy = float(np.dot(s, yk))
        if sy > 1e-10:
            rho = 1.0 / sy
            A = np.eye(n) - rho * np.outer(s, yk)
            H = A @ H @ A.T + rho * np.outer(s, s)
        x = x + s
        f, g = f_new, g_new
        history.append(f)
    converged = bool(np.linalg.norm(g) <= gtol)
    return x, history, max_iter, converged


def default_window_margin(ds: float) -> float:
    """Margin added around a region's bounding box to form its fit window."""
    return max(1.0, 3.0 * ds)


# The logistic boundary lands within a cell of the last occupied lattice ring,
# so the fit trains on a grid padded beyond the safety inflation; the sub-cell
# boundary error then eats into the pad, never into the ds margin.
FIT_PAD_CELLS = 2


def fit_barriers(grid: OccupancyGrid, ds: float,
                 spacing: float) -> list[tuple[BarrierFunction, FitReport]]:
    """Full fit pipeline: pad-inflate the raw grid, then fit every region.

    The training grid is inflated by ``ds`` plus FIT_PAD_CELLS cells, making
    each barrier strictly more conservative than the ds-inflated obstacle.
    """
    from .gridmap import inflate

    fit_grid = inflate(grid, ds + FIT_PAD_CELLS * grid.resolution)
    return fit_regions(fit_grid, spacing, default_window_margin(ds))


def fit(samples: list[LabeledSample], region: Region,
        window: float) -> tuple[BarrierFunction, FitReport]:
    """Fit a barrier to one region from the lattice samples near it.

    Only samples inside the region's bounding box expanded by ``window``
    meters per side are used. Coordinates are normalized to [-1, 1]^2 for
    conditioning and the coefficients are mapped back to world coordinates
    analytically. Sign convention: h > 0 on free samples (label 1).

    Raises FitError if the window holds fewer than 16 samples or only one
    label. Non-convergence is reported, not raised.
    """
    bx0, by0, bx1, by1 = region.bounding_box
    wx0, wy0, wx1, wy1 = bx0 - window, by0 - window, bx1 + window, by1 + window
    sel = [s for s in samples
           if wx0 <= s.position[0] <= wx1 and wy0 <= s.position[1] <= wy1]
    if len(sel) < 16:
        raise FitError(f"region {region.id}: only {len(sel)} samples in window, need >= 16")
    y = np.array([s.label for s in sel], dtype=float)
    if y.min() == y.max():
        raise FitError(f"region {region.id}: window contains a single label, no boundary to fit")

    cx, cy = (wx0 + wx1) / 2, (wy0 + wy1) / 2
    sx, sy_ = (wx1 - wx0) / 2, (wy1 - wy0) / 2
    pts = np.array([s.position for s in sel])
    normed = np.column_stack(((pts[:, 0] - cx) / sx, (pts[:, 1] - cy) / sy_))
    Z = feature_matrix(normed)

    beta_n, history, iters, converged = _bfgs(
        lambda b: _cost_grad(b, Z, y), np.zeros(NUM_FEATURES))

    t = Z @ beta_n
    acc = float(np.mean((t > 0) == (y == 1)))
    if acc < 0.5:
        beta_n = -beta_n
        acc = 1.0 - acc
    beta_w = compose_affine(beta_n, cx, cy, sx, sy_)
    bf = BarrierFunction(beta_w, region.id, (wx0, wy0, wx1, wy1))
    report = FitReport(final_cost=history[-1], iterations=iters,
                       converged=converged, train_accuracy=acc)
    return bf, report


def compose_affine(beta: np.ndarray, cx: float, cy: float,
                   sx: float, sy: float) -> np.ndarray:
    """Rewrite h(u, v) with u = (x - cx)/sx, v = (y - cy)/sy as a polynomial in (x, y).

    Expands each normalized monomial with the binomial theorem; total degree
    is preserved, so the result is again a 15-coefficient vector.
    """
    out = np.zeros(NUM_FEATURES)
    for k, (i, j) in enumerate(EXPONENT_PAIRS):
        bk = beta[k]
        if bk == 0.0:
            continue
        scale = bk / (sx**i * sy**j)
        for p in range(i + 1):
            cp = math.comb(i, p) * (-cx) ** (i - p)
            for q in range(j + 1):
                cq = math.comb(j, q) * (-cy) ** (j - q)
                out[_INDEX[(p, q)]] += scale * cp * cq
    return out


def fit_regions(grid: OccupancyGrid, spacing: float,
                window: float) -> list[tuple[BarrierFunction, FitReport]]:
    """Fit one barrier per occupied region of ``grid`` (typically the inflated map)."""
    samples = sample_labels(grid, spacing)
    return [fit(samples, region, window) for region in partition_regions(grid)]


def save_barriers(path: str, barriers: list[BarrierFunction]) -> None:
    """Write a barrier set file, one record per region.

    Line format: ``region <id>; window x0 y0 x1 y1; beta b0 ... b14`` with
    floats in repr form (round-trip exact).
    """
    with open(path, "w") as f:
        for bf in barriers:
            window = " ".join(repr(float(v)) for v in bf.window)
            beta = " ".join(repr(v) for v in bf.beta.tolist())
            f.write(f"region {bf.region_id}; window {window}; beta {beta}\n")


def load_barriers(path: str) -> list[BarrierFunction]:
    barriers = []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rpart, wpart, bpart = (part.strip() for part in line.split(";"))
                rid = int(rpart.removeprefix("region "))
                window = tuple(float(v) for v in wpart.removeprefix("window ").split())
                beta = np.array([float(v) for v in bpart.removeprefix("beta ").split()])
                if len(window) != 4:
                    raise ValueError("window needs 4 values")
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed barrier record") from exc
            barriers.append(BarrierFunction(beta, rid, window))
    return barriers
