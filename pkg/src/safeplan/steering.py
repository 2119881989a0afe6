"""Multi-step CBF steering: one tree extension as several QP-filtered small steps.

Growing a big step as four small steps, each re-solving the CBF-QP at the
tentative next position, keeps the constraint from jumping straight into
infeasibility near obstacle boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .barrier import BarrierFunction, eval_h
from .cbf import (
    CbfGains,
    QpInfeasibleError,
    RobotState,
    active_barriers,
    constraint_coeffs,
    solve_qp,
    wrap_angle,
)
from .tree import Node, planar_distance

SAFETY_AUDIT_TOL = -1e-6


@dataclass(frozen=True)
class SteerParams:
    """Small-step schedule: ``steps`` sub-steps of length v*dt each."""

    steps: int = 4
    dt: float = 1.0
    v: float = 0.2

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.dt <= 0 or self.v <= 0:
            raise ValueError(f"dt and v must be > 0, got dt={self.dt}, v={self.v}")

    @property
    def step_length(self) -> float:
        return self.v * self.dt


@dataclass
class SteerOutcome:
    """Result of one steering attempt.

    ``chain`` holds the surviving sub-step nodes in order, sequentially
    parented starting from the anchor node. ``feasible`` is False when the QP
    had no solution or a chain node failed the barrier audit; the chain is
    then truncated before the offending step.
    """

    final_node: Node | None
    chain: list[Node] = field(default_factory=list)
    feasible: bool = True
    steps_completed: int = 0


def extend(from_point: tuple[float, float], theta: float,
           step_len: float) -> tuple[float, float]:
    """Point reached by moving ``step_len`` meters along heading ``theta``."""
    if step_len <= 0:
        raise ValueError(f"step length must be > 0, got {step_len}")
    return from_point[0] + step_len * math.cos(theta), from_point[1] + step_len * math.sin(theta)


def angle_update(omega: float, theta: float, dt: float) -> float:
    """Heading after applying turn rate ``omega`` for ``dt`` seconds, wrapped to (-pi, pi]."""
    return wrap_angle(theta + omega * dt)


def cbf_steer(barriers: list[BarrierFunction], n_near: Node, theta_xs: float,
              params: SteerParams, gains: CbfGains, u_ref: float,
              u_min: float, u_max: float, id_start: int = 0) -> SteerOutcome:
    """Grow one big step from ``n_near`` toward heading ``theta_xs``.

    Per small step: tentatively extend from the chain tail along the current
    heading, solve the CBF-QP at that tentative position with the pre-update
    heading, update the heading with the resulting turn rate, then re-extend
    from the tail along the new heading and append the node.

    Chain node k receives id ``id_start + k`` and is parented to the previous
    chain node (the first to ``n_near``). Each appended node is re-checked
    against the active barriers; QP infeasibility or an audit failure at step
    k truncates the chain to k-1 nodes and marks the outcome infeasible.
    """
    theta = wrap_angle(theta_xs)
    tail = n_near
    chain: list[Node] = []
    for k in range(params.steps):
        tx, ty = extend(tail.position, theta, params.step_length)
        state = RobotState(tx, ty, theta)
        cons = [constraint_coeffs(bf, state, params.v, gains)
                for bf in active_barriers(barriers, tx, ty)]
        try:
            omega = solve_qp(cons, u_ref, u_min, u_max)
        except QpInfeasibleError:
            return SteerOutcome(chain[-1] if chain else None, chain, False, k)
        theta_new = angle_update(omega, theta, params.dt)
        nx, ny = extend(tail.position, theta_new, params.step_length)
        new_state = RobotState(nx, ny, theta_new)
        bad = any(eval_h(bf, nx, ny) < SAFETY_AUDIT_TOL
                  for bf in active_barriers(barriers, nx, ny))
        if bad:
            return SteerOutcome(chain[-1] if chain else None, chain, False, k)
        node = Node(id=id_start + k, state=new_state, parent=tail.id,
                    cost=tail.cost + planar_distance(tail.state, new_state))
        chain.append(node)
        tail = node
        theta = theta_new
    return SteerOutcome(chain[-1], chain, True, params.steps)
