"""CBF-RRT*: sampling, nearest lookup, CBF steering, ChooseParent/Rewire, path extraction.

Steering anchors come from the big-step endpoint list (tree_ids); ChooseParent
and Rewire operate over all nodes, including sub-step chain nodes, using the
geometric collision check on the inflated grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .barrier import BarrierFunction, eval_h
from .cbf import CbfGains, RobotState, active_barriers, wrap_angle
from .gridmap import OccupancyGrid, inflate, segment_collision_free
from .steering import SteerParams, cbf_steer
from .tree import Node, Tree, planar_distance

BARRIER_NODE_TOL = -1e-6
COST_IMPROVE_EPS = 1e-12


class StartInCollisionError(ValueError):
    """The start pose violates the inflated grid or a barrier."""


@dataclass(frozen=True)
class PlannerConfig:
    """All planner tunables. Defaults follow the desk-scale scenarios."""

    v: float = 0.2
    gains: CbfGains = field(default_factory=lambda: CbfGains(4.0, 2.0))
    ds: float = 0.2
    u_ref: float = 0.0
    u_min: float = -1.0
    u_max: float = 1.0
    steps: int = 4
    dt: float = 1.0
    max_iterations: int = 120
    goal_radius: float = 0.3
    near_radius_gamma: float = 10.0
    goal_bias: float = 0.05
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.goal_bias < 1.0:
            raise ValueError(f"goal_bias must be in [0, 1), got {self.goal_bias}")
        for name in ("v", "dt", "goal_radius", "near_radius_gamma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.ds < 0:
            raise ValueError("ds must be >= 0")
        if self.steps < 1 or self.max_iterations < 1:
            raise ValueError("steps and max_iterations must be >= 1")
        if self.u_min > self.u_max:
            raise ValueError("u_min must not exceed u_max")

    @property
    def big_step(self) -> float:
        return self.steps * self.v * self.dt


@dataclass
class PlanResult:
    """Planning outcome: best path found (root to goal), tree, and bookkeeping.

    ``best_cost_by_iteration[i]`` is the cheapest goal-reaching cost known
    after iteration i+1 (inf before the first solution); ``first_path_iteration``
    is the 1-based iteration that produced the first solution.
    """

    path: list[Node]
    iterations_used: int
    tree: Tree
    found: bool
    first_path_iteration: int | None = None
    best_cost_by_iteration: list[float] = field(default_factory=list)


def sample_point(bounds: tuple[float, float, float, float], goal: tuple[float, float],
                 goal_bias: float, rng: np.random.Generator) -> tuple[float, float]:
    """Uniform sample over the map bounds, replaced by the goal with probability goal_bias."""
    if rng.uniform() < goal_bias:
        return goal
    x0, y0, x1, y1 = bounds
    return float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1))


def nearest(tree: Tree, p: tuple[float, float]) -> Node:
    """Anchor-list node closest to ``p``; ties break to the lowest id."""
    if not tree.tree_ids:
        raise ValueError("tree has no anchor nodes")
    best = None
    best_d = math.inf
    for nid in tree.tree_ids:
        node = tree.nodes[nid]
        d = math.hypot(node.state.x1 - p[0], node.state.x2 - p[1])
        if d < best_d:
            best, best_d = node, d
    return best


def steer_heading(n_near: Node, p: tuple[float, float]) -> float:
    """Bearing from the node to the sample; the node's own heading if they coincide."""
    dx, dy = p[0] - n_near.state.x1, p[1] - n_near.state.x2
    if dx == 0.0 and dy == 0.0:
        return n_near.state.theta
    return math.atan2(dy, dx)


def near_indices(tree: Tree, n: Node, gamma: float, max_radius: float) -> list[int]:
    """Ids of stored nodes within the shrinking-ball radius of ``n``.

    Radius is min(gamma * sqrt(log(N)/N), max_radius) with N the current node
    count; ``n`` itself is excluded if already stored.
    """
    count = len(tree.nodes)
    radius = min(gamma * math.sqrt(math.log(count) / count), max_radius)
    out = []
    for node in tree.nodes:
        if node.id == n.id:
            continue
        if planar_distance(node.state, n.state) <= radius:
            out.append(node.id)
    return out


def choose_parent(tree: Tree, n: Node, near_ids: list[int], grid: OccupancyGrid) -> Node:
    """Reparent ``n`` to the near node giving the lowest cost-through, if any beats it.

    Candidate edges are validated with the geometric collision check on the
    (inflated) grid. The incumbent steering parent stays when no collision-free
    near node improves the cost. ``n`` is mutated and returned.
    """
    best_parent = n.parent
    best_cost = n.cost
    for mid in near_ids:
        m = tree.nodes[mid]
        c = m.cost + planar_distance(m.state, n.state)
        if c < best_cost - COST_IMPROVE_EPS and segment_collision_free(grid, m.position, n.position):
            best_parent, best_cost = mid, c
    n.parent = best_parent
    n.cost = best_cost
    return n


def rewire(tree: Tree, n: Node, near_ids: list[int], grid: OccupancyGrid) -> Tree:
    """Reconnect near nodes through ``n`` wherever that lowers their cost.

    Cost decreases propagate to descendants. Positive edge lengths make an
    improving connection to an ancestor impossible, so the forest stays acyclic.
    """
    for mid in near_ids:
        m = tree.nodes[mid]
        c = n.cost + planar_distance(n.state, m.state)
        if c < m.cost - COST_IMPROVE_EPS and segment_collision_free(grid, n.position, m.position):
            tree.reparent(mid, n.id, c)
    return tree


def plan(grid: OccupancyGrid, barriers: list[BarrierFunction], config: PlannerConfig,
         start: tuple[float, float], goal: tuple[float, float],
         audit: bool = False) -> PlanResult:
    """Run CBF-RRT* from ``start`` to ``goal`` on the raw occupancy grid.

    The grid is inflated by ``config.ds`` internally; barriers are expected to
    have been fitted against the same inflation. Runs the full iteration
    budget, keeps every goal-reaching node, and returns the cheapest path.
    With ``audit=True`` the tree invariants (forest property, cost
    consistency, node safety) are re-checked every iteration.
    """
    inflated = inflate(grid, config.ds)
    _check_start(inflated, barriers, start)
    if not inflated.contains(*goal):
        raise ValueError(f"goal {goal} outside map bounds")

    rng = np.random.default_rng(config.rng_seed)
    root_theta = math.atan2(goal[1] - start[1], goal[0] - start[0]) if start != goal else 0.0
    tree = Tree(RobotState(start[0], start[1], root_theta))
    params = SteerParams(config.steps, config.dt, config.v)

    goal_hits: list[int] = []
    if _near_goal(tree.root, goal, config.goal_radius):
        goal_hits.append(0)
    first_path_iteration = 1 if goal_hits else None
    best_costs: list[float] = []

    for iteration in range(1, config.max_iterations + 1):
        x_s = sample_point(inflated.bounds, goal, config.goal_bias, rng)
        n_near = nearest(tree, x_s)
        theta_xs = steer_heading(n_near, x_s)
        outcome = cbf_steer(barriers, n_near, theta_xs, params, config.gains,
                            config.u_ref, config.u_min, config.u_max,
                            id_start=tree.next_id())
        chain = _truncate_to_free(outcome.chain, inflated)
        anchored = outcome.feasible and len(chain) == params.steps

        prev = n_near
        for node in chain:
            node.parent = prev.id
            node.cost = prev.cost + planar_distance(prev.state, node.state)
            near = near_indices(tree, node, config.near_radius_gamma, config.big_step)
            choose_parent(tree, node, near, inflated)
            tree.insert(node)
            rewire(tree, node, near, inflated)
            if _near_goal(node, goal, config.goal_radius):
                goal_hits.append(node.id)
                if first_path_iteration is None:
                    first_path_iteration = iteration
            prev = node
        if anchored and chain:
            tree.mark_anchor(chain[-1].id)

        best_costs.append(min((tree.nodes[i].cost for i in goal_hits), default=math.inf))
        if audit:
            _audit_tree(tree, barriers, inflated)

    found = bool(goal_hits)
    path: list[Node] = []
    if found:
        best = min(goal_hits, key=lambda i: (tree.nodes[i].cost, i))
        path = tree.path_to_root(best)
    return PlanResult(path, config.max_iterations, tree, found,
                      first_path_iteration, best_costs)


def _near_goal(node: Node, goal: tuple[float, float], radius: float) -> bool:
    return math.hypot(node.state.x1 - goal[0], node.state.x2 - goal[1]) <= radius


def _check_start(inflated: OccupancyGrid, barriers: list[BarrierFunction],
                 start: tuple[float, float]) -> None:
    if not inflated.contains(*start):
        raise StartInCollisionError(f"start {start} outside map bounds")
    if not inflated.is_free(*start):
        raise StartInCollisionError(f"start {start} lies in an occupied inflated cell")
    for bf in active_barriers(barriers, *start):
        if eval_h(bf, *start) < 0:
            raise StartInCollisionError(
                f"start {start} violates barrier for region {bf.region_id}")


def _truncate_to_free(chain: list[Node], inflated: OccupancyGrid) -> list[Node]:
    """Keep the chain prefix whose nodes stay inside the map and in free inflated cells."""
    out = []
    for node in chain:
        x1, x2 = node.position
        if not inflated.contains(x1, x2) or not inflated.is_free(x1, x2):
            break
        out.append(node)
    return out


def _audit_tree(tree: Tree, barriers: list[BarrierFunction], inflated: OccupancyGrid) -> None:
    for node in tree.nodes:
        if node.parent is None:
            if node.cost != 0.0:
                raise AssertionError("root cost must be 0")
            continue
        parent = tree.nodes[node.parent]
        expected = parent.cost + planar_distance(parent.state, node.state)
        if abs(node.cost - expected) > 1e-9 * max(1.0, expected):
            raise AssertionError(f"node {node.id} cost {node.cost} != {expected}")
        if not inflated.is_free(*node.position):
            raise AssertionError(f"node {node.id} in occupied inflated cell")
        for bf in active_barriers(barriers, *node.position):
            if eval_h(bf, *node.position) < BARRIER_NODE_TOL:
                raise AssertionError(f"node {node.id} violates barrier {bf.region_id}")
        # forest check: walk to the root without revisiting
        seen = {node.id}
        nid = node.parent
        while nid is not None:
            if nid in seen:
                raise AssertionError(f"cycle through node {nid}")
            seen.add(nid)
            nid = tree.nodes[nid].parent
