"""CBF constraint assembly and the closed-form scalar CBF-QP.

For the constant-speed unicycle, a position barrier h(x1, x2) has relative
degree two in the turn rate u: differentiating twice along the dynamics makes
u appear. With linear class-kappa functions the safety condition becomes one
affine inequality a*u + b >= 0 per barrier, so the QP that projects a
reference turn rate onto the safe set reduces to interval clamping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .barrier import BarrierFunction, eval_h, features, features_gradient, features_hessian

# Barriers are enforced only inside the window they were fitted in; beyond it
# the polynomial extrapolates and its sign is meaningless.
ACTIVATION_MARGIN = 0.0


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = math.remainder(theta, math.tau)
    return math.pi if w <= -math.pi else w


@dataclass(frozen=True)
class RobotState:
    """Planar pose (x1, x2, theta). Heading is normalized to (-pi, pi]."""

    x1: float
    x2: float
    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def position(self) -> tuple[float, float]:
        return self.x1, self.x2


@dataclass(frozen=True)
class CbfGains:
    """CBF shaping coefficients: constraint is L_f^2 h + L_g L_f h u + k1 hdot + k0 h >= 0."""

    k0: float
    k1: float

    def __post_init__(self) -> None:
        if self.k0 <= 0 or self.k1 <= 0:
            raise ValueError(f"gains must be positive, got k0={self.k0}, k1={self.k1}")


@dataclass(frozen=True)
class LinearConstraint:
    """One barrier's safety condition in the affine form a*u + b >= 0."""

    a: float
    b: float
    region_id: int


class QpInfeasibleError(RuntimeError):
    """The constraint intervals have empty intersection; no safe input exists."""

    def __init__(self, lower: float, upper: float):
        super().__init__(f"empty feasible interval [{lower}, {upper}]")
        self.lower = lower
        self.upper = upper


def constraint_coeffs(bf: BarrierFunction, s: RobotState, v: float,
                      gains: CbfGains) -> LinearConstraint:
    """Coefficients (a, b) of the barrier's safety condition at state ``s``.

    a = beta . (-dz/dx1 sin(theta) + dz/dx2 cos(theta)) v
    b = L_f^2 h + k1 * hdot + k0 * h
    """
    if v <= 0:
        raise ValueError(f"forward speed must be > 0, got {v}")
    c, sn = math.cos(s.theta), math.sin(s.theta)
    z = features(s.x1, s.x2)
    z1, z2 = features_gradient(s.x1, s.x2)
    z11, z12, z22 = features_hessian(s.x1, s.x2)
    beta = bf.beta
    h = float(beta @ z)
    hdot = v * float(beta @ (z1 * c + z2 * sn))
    lf2 = v * v * float(beta @ (z11 * c * c + 2.0 * z12 * sn * c + z22 * sn * sn))
    a = v * float(beta @ (-z1 * sn + z2 * c))
    b = lf2 + gains.k1 * hdot + gains.k0 * h
    return LinearConstraint(a, b, bf.region_id)


def solve_qp(constraints: list[LinearConstraint], u_ref: float,
             u_min: float, u_max: float) -> float:
    """Exact minimizer of |u - u_ref|^2 over the feasible turn-rate interval.

    Each constraint a*u + b >= 0 bounds u on one side; the intersection with
    [u_min, u_max] is an interval, and the unique QP solution is the clamp of
    u_ref onto it. An interval is accepted as non-empty down to width -1e-9 to
    absorb floating-point noise at a single feasible point.

    Raises QpInfeasibleError on an empty interval and ValueError on non-finite
    constraint data (numerical failure, distinct from infeasibility).
    """
    if u_min > u_max:
        raise ValueError(f"u_min {u_min} exceeds u_max {u_max}")
    lower, upper = u_min, u_max
    for con in constraints:
        if not (math.isfinite(con.a) and math.isfinite(con.b)):
            raise ValueError(f"non-finite constraint for region {con.region_id}")
        if con.a == 0.0:
            if con.b < 0.0:
                raise QpInfeasibleError(math.inf, -math.inf)
            continue
        bound = -con.b / con.a
        if con.a > 0.0:
            lower = max(lower, bound)
        else:
            upper = min(upper, bound)
    if upper - lower < -1e-9:
        raise QpInfeasibleError(lower, upper)
    if lower > upper:
        lower = upper = (lower + upper) / 2.0
    return min(max(u_ref, lower), upper)


def active_barriers(barriers: list[BarrierFunction], x1: float,
                    x2: float) -> list[BarrierFunction]:
    """Barriers whose fit window (expanded by the activation margin) contains the point."""
    out = []
    for bf in barriers:
        wx0, wy0, wx1, wy1 = bf.window
        m = ACTIVATION_MARGIN
        if wx0 - m <= x1 <= wx1 + m and wy0 - m <= x2 <= wy1 + m:
            out.append(bf)
    return out


def min_active_h(barriers: list[BarrierFunction], x1: float, x2: float) -> float:
    """Minimum barrier value over active barriers; +inf when none is active."""
    values = [eval_h(bf, x1, x2) for bf in active_barriers(barriers, x1, x2)]
    return min(values) if values else math.inf


def safe_turn_rate(barriers: list[BarrierFunction], s: RobotState, v: float,
                   gains: CbfGains, u_ref: float, u_min: float, u_max: float) -> float:
    """Filter a reference turn rate through the CBF-QP with active barriers."""
    cons = [constraint_coeffs(bf, s, v, gains)
            for bf in active_barriers(barriers, s.x1, s.x2)]
    return solve_qp(cons, u_ref, u_min, u_max)
