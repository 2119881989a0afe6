"""Kinematic rollout: follow a planned waypoint path through the CBF-QP filter.

The real platform delegates waypoint tracking to its own locomotion stack;
this module substitutes the simplest heading controller that still exercises
the safety filter at execution time, and audits barrier values along the way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .barrier import BarrierFunction
from .cbf import (
    CbfGains,
    QpInfeasibleError,
    RobotState,
    min_active_h,
    safe_turn_rate,
    wrap_angle,
)
from .gridmap import OccupancyGrid

DT_SIM = 0.01
HEADING_GAIN = 1.5
CAPTURE_RADIUS = 0.15


class TrajectorySample(NamedTuple):
    time: float
    state: RobotState
    omega: float
    min_h: float


@dataclass
class Trajectory:
    """Executed rollout: fixed-step samples of pose, applied turn rate, and min barrier value."""

    samples: list[TrajectorySample]

    @property
    def final_state(self) -> RobotState:
        return self.samples[-1].state

    def min_h_overall(self) -> float:
        return min((s.min_h for s in self.samples), default=math.inf)


class RolloutError(RuntimeError):
    """Rollout stopped before reaching the final waypoint; carries the partial trajectory."""

    def __init__(self, message: str, trajectory: Trajectory):
        super().__init__(message)
        self.trajectory = trajectory


class RolloutTimeout(RolloutError):
    pass


class RolloutInfeasible(RolloutError):
    pass


def step_dynamics(s: RobotState, omega: float, v: float, dt: float) -> RobotState:
    """Forward-Euler step of the unicycle: xdot = (v cos theta, v sin theta, omega)."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return RobotState(
        s.x1 + v * math.cos(s.theta) * dt,
        s.x2 + v * math.sin(s.theta) * dt,
        wrap_angle(s.theta + omega * dt),
    )


def follow_path(path: Sequence[tuple[float, float, float]],
                barriers: list[BarrierFunction],
                grid: OccupancyGrid | None,
                v: float,
                gains: CbfGains,
                u_min: float,
                u_max: float,
                dt_sim: float = DT_SIM,
                heading_gain: float = HEADING_GAIN,
                capture_radius: float = CAPTURE_RADIUS,
                timeout: float | None = None) -> Trajectory:
    """Track waypoints (x1, x2, theta) with a heading controller behind the CBF filter.

    The reference turn rate steers toward the active waypoint; the CBF-QP
    filters it against the active barriers. A waypoint within the capture
    radius advances the target; the rollout ends when the final waypoint is
    captured. The default timeout is four times the nominal traversal time
    plus 20 s.

    Raises RolloutTimeout / RolloutInfeasible (both carrying the partial
    trajectory) when tracking stalls or the QP loses feasibility.
    """
    if not path:
        raise ValueError("path must be non-empty")
    if v <= 0:
        raise ValueError(f"forward speed must be > 0, got {v}")
    state = RobotState(*path[0])
    if grid is not None and not grid.contains(state.x1, state.x2):
        raise ValueError("path start outside map bounds")
    if min_active_h(barriers, state.x1, state.x2) < 0:
        raise ValueError("path start violates a barrier")
    if timeout is None:
        nominal = sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(path, path[1:]))
        timeout = 4.0 * nominal / v + 20.0

    samples: list[TrajectorySample] = []
    wp_idx = 0
    step = 0
    while True:
        while wp_idx < len(path) and _dist(state, path[wp_idx]) <= capture_radius:
            wp_idx += 1
        if wp_idx == len(path):
            break
        t = step * dt_sim
        if t > timeout:
            raise RolloutTimeout(
                f"waypoint {wp_idx} not reached within {timeout:.1f} s", Trajectory(samples))
        wx, wy, _ = path[wp_idx]
        bearing = math.atan2(wy - state.x2, wx - state.x1)
        u_ref = min(max(heading_gain * wrap_angle(bearing - state.theta), u_min), u_max)
        try:
            omega = safe_turn_rate(barriers, state, v, gains, u_ref, u_min, u_max)
        except QpInfeasibleError as exc:
            raise RolloutInfeasible(
                f"CBF-QP infeasible at t={t:.3f} s near waypoint {wp_idx}",
                Trajectory(samples)) from exc
        samples.append(TrajectorySample(t, state, omega,
                                        min_active_h(barriers, state.x1, state.x2)))
        state = step_dynamics(state, omega, v, dt_sim)
        step += 1

    samples.append(TrajectorySample(step * dt_sim, state, 0.0,
                                    min_active_h(barriers, state.x1, state.x2)))
    return Trajectory(samples)


def _dist(state: RobotState, waypoint: tuple[float, float, float]) -> float:
    return math.hypot(waypoint[0] - state.x1, waypoint[1] - state.x2)
