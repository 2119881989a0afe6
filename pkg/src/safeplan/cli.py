"""Command-line pipeline: fit barriers, plan, simulate, render.

Every command writes a ``<out>.manifest.json`` recording the config snapshot,
input digests, seed, per-stage timings, and output paths; re-running with the
same inputs and seed reproduces every output byte-identically.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time

from .barrier import FitError, fit_barriers, load_barriers, save_barriers
from .config import ConfigError, RunConfig, config_snapshot, load_config
from .gridmap import MapFormatError, inflate, load_map_file
from .planner import StartInCollisionError, plan
from .render import render_svg
from .sim import RolloutInfeasible, RolloutTimeout, follow_path

EXIT_OK = 0
EXIT_USAGE = 2           # bad arguments, unreadable files, invalid config
EXIT_MAP_FORMAT = 3      # map file cannot be parsed
EXIT_FIT_FAILED = 4      # a region's fit failed or did not converge
EXIT_START_INVALID = 5   # start pose in collision
EXIT_NO_PATH = 6         # no path within the iteration budget
EXIT_SIM_TIMEOUT = 7     # rollout did not reach the final waypoint in time
EXIT_SIM_INFEASIBLE = 8  # CBF-QP lost feasibility during the rollout

_EXIT_CODE_HELP = """\
exit codes:
  0  success
  2  usage error, unreadable input, or invalid config
  3  malformed map file
  4  barrier fit failed (single-label region or non-convergence)
  5  start pose in collision
  6  no path found within the iteration budget
  7  simulation timed out before the final waypoint
  8  CBF-QP infeasible during simulation
"""

log = logging.getLogger("safeplan")

MIN_H_TOLERANCE = -1e-3


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ConfigError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except MapFormatError as exc:
        log.error("map error: %s", exc)
        return EXIT_MAP_FORMAT


def _setup_logging() -> None:
    level = os.environ.get("SAFEPLAN_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safeplan",
        description="Barrier-function path planning on occupancy grids.",
        epilog=_EXIT_CODE_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one barrier per obstacle region",
                           epilog=_EXIT_CODE_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
    p_fit.add_argument("--map", required=True)
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("--out", required=True, help="output prefix; writes <out>.barriers")
    p_fit.set_defaults(func=cmd_fit)

    p_plan = sub.add_parser("plan", help="run CBF-RRT* and write path/tree CSVs",
                            epilog=_EXIT_CODE_HELP,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
    p_plan.add_argument("--map", required=True)
    p_plan.add_argument("--barriers", required=True)
    p_plan.add_argument("--config", required=True)
    p_plan.add_argument("--out", required=True,
                        help="output prefix; writes <out>.path.csv and <out>.tree.csv")
    p_plan.add_argument("--seed", type=int, default=None,
                        help="override planner.seed from the config")
    p_plan.set_defaults(func=cmd_plan)

    p_sim = sub.add_parser("simulate", help="roll out a planned path through the CBF filter",
                           epilog=_EXIT_CODE_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
    p_sim.add_argument("--path", required=True, help="path CSV from 'plan'")
    p_sim.add_argument("--barriers", required=True)
    p_sim.add_argument("--map", required=True)
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True, help="output prefix; writes <out>.traj.csv")
    p_sim.set_defaults(func=cmd_simulate)

    p_render = sub.add_parser("render", help="render map, barriers, tree, path, trajectory to SVG",
                              epilog=_EXIT_CODE_HELP,
                              formatter_class=argparse.RawDescriptionHelpFormatter)
    p_render.add_argument("--map", required=True)
    p_render.add_argument("--barriers", default=None)
    p_render.add_argument("--tree", default=None, help="tree CSV from 'plan'")
    p_render.add_argument("--path", default=None, help="path CSV from 'plan'")
    p_render.add_argument("--traj", default=None, help="trajectory CSV from 'simulate'")
    p_render.add_argument("--out", required=True, help="output prefix; writes <out>.svg")
    p_render.set_defaults(func=cmd_render)
    return parser


class _Manifest:
    def __init__(self, command: str, config: RunConfig | None, seed: int | None):
        self.data = {
            "command": command,
            "config": config_snapshot(config) if config else {},
            "inputs": {},
            "rng_seed": seed,
            "timings_ms": {},
            "outputs": [],
        }

    def add_input(self, path: str) -> None:
        with open(path, "rb") as f:
            digest = hashlib.sha256(f.read()).hexdigest()
        self.data["inputs"][path] = digest

    def stage(self, name: str, started: float) -> None:
        self.data["timings_ms"][name] = round((time.perf_counter() - started) * 1000.0, 3)

    def add_output(self, path: str) -> None:
        self.data["outputs"].append(path)

    def write(self, prefix: str) -> str:
        path = f"{prefix}.manifest.json"
        with open(path, "w") as f:
            json.dump(self.data, f, indent=2, sort_keys=True)
            f.write("\n")
        return path


def cmd_fit(args) -> int:
    config = load_config(args.config)
    manifest = _Manifest("fit", config, None)
    manifest.add_input(args.map)
    manifest.add_input(args.config)

    t0 = time.perf_counter()
    grid = load_map_file(args.map)
    manifest.stage("load_map", t0)

    t0 = time.perf_counter()
    try:
        fits = fit_barriers(grid, config["planner.ds"], config["fit.spacing"])
    except FitError as exc:
        log.error("fit failed: %s", exc)
        return EXIT_FIT_FAILED
    manifest.stage("fit", t0)

    out_path = f"{args.out}.barriers"
    save_barriers(out_path, [bf for bf, _ in fits])
    manifest.add_output(out_path)
    manifest.write(args.out)

    all_converged = True
    for bf, report in fits:
        print(f"region {bf.region_id}: cost={report.final_cost:.6g} "
              f"iterations={report.iterations} converged={report.converged} "
              f"accuracy={report.train_accuracy:.4f}")
        all_converged &= report.converged
    if not fits:
        log.warning("map has no obstacle regions; wrote an empty barrier file")
    if not all_converged:
        log.error("at least one region did not converge")
        return EXIT_FIT_FAILED
    return EXIT_OK


def cmd_plan(args) -> int:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else config["planner.seed"]
    manifest = _Manifest("plan", config, seed)
    for path in (args.map, args.barriers, args.config):
        manifest.add_input(path)

    t0 = time.perf_counter()
    grid = load_map_file(args.map)
    barriers = load_barriers(args.barriers)
    manifest.stage("load", t0)

    start, goal = config.start(), config.goal()
    t0 = time.perf_counter()
    try:
        result = plan(grid, barriers, config.planner_config(seed), start, goal)
    except StartInCollisionError as exc:
        log.error("%s", exc)
        return EXIT_START_INVALID
    manifest.stage("plan", t0)

    path_csv = f"{args.out}.path.csv"
    tree_csv = f"{args.out}.tree.csv"
    _write_path_csv(path_csv, result.path)
    _write_tree_csv(tree_csv, result.tree)
    manifest.add_output(path_csv)
    manifest.add_output(tree_csv)
    manifest.write(args.out)

    if not result.found:
        log.error("no path within %d iterations", result.iterations_used)
        return EXIT_NO_PATH
    print(f"path found: cost={result.path[-1].cost:.4f} "
          f"first_iteration={result.first_path_iteration} "
          f"nodes={len(result.tree.nodes)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    manifest = _Manifest("simulate", config, None)
    for path in (args.path, args.barriers, args.map, args.config):
        manifest.add_input(path)

    grid = load_map_file(args.map)
    barriers = load_barriers(args.barriers)
    waypoints = _read_path_csv(args.path)
    if not waypoints:
        log.error("path file %s holds no waypoints", args.path)
        return EXIT_USAGE

    # the final commanded waypoint is the goal itself
    goal = config.goal()
    capture = config["sim.capture_radius"]
    if math.hypot(waypoints[-1][0] - goal[0], waypoints[-1][1] - goal[1]) > capture:
        waypoints.append((goal[0], goal[1], waypoints[-1][2]))

    t0 = time.perf_counter()
    inflated = inflate(grid, config["planner.ds"])
    try:
        traj = follow_path(
            waypoints, barriers, inflated,
            v=config["planner.v"],
            gains=config.planner_config().gains,
            u_min=config["planner.u_min"],
            u_max=config["planner.u_max"],
            dt_sim=config["sim.dt"],
            heading_gain=config["sim.heading_gain"],
            capture_radius=capture,
            timeout=config["sim.timeout"],
        )
    except RolloutTimeout as exc:
        _write_traj_csv(f"{args.out}.traj.csv", exc.trajectory)
        log.error("%s", exc)
        return EXIT_SIM_TIMEOUT
    except RolloutInfeasible as exc:
        _write_traj_csv(f"{args.out}.traj.csv", exc.trajectory)
        log.error("%s", exc)
        return EXIT_SIM_INFEASIBLE
    manifest.stage("simulate", t0)

    traj_csv = f"{args.out}.traj.csv"
    _write_traj_csv(traj_csv, traj)
    manifest.add_output(traj_csv)
    manifest.write(args.out)

    min_h = traj.min_h_overall()
    print(f"rollout: steps={len(traj.samples)} min_h={min_h:.6g}")
    if min_h < MIN_H_TOLERANCE:
        log.error("trajectory violated a barrier: min_h=%.6g", min_h)
        return EXIT_SIM_INFEASIBLE
    return EXIT_OK


def cmd_render(args) -> int:
    manifest = _Manifest("render", None, None)
    manifest.add_input(args.map)
    grid = load_map_file(args.map)

    barriers = None
    if args.barriers is not None:
        manifest.add_input(args.barriers)
        barriers = load_barriers(args.barriers)
    tree_edges = None
    if args.tree is not None:
        manifest.add_input(args.tree)
        tree_edges = _tree_edges_from_csv(args.tree)
    path_points = None
    if args.path is not None:
        manifest.add_input(args.path)
        path_points = [(x, y) for x, y, _ in _read_path_csv(args.path)]
    traj_points = None
    if args.traj is not None:
        manifest.add_input(args.traj)
        traj_points = _traj_points_from_csv(args.traj)
    for name, value in (("barriers", barriers), ("tree", tree_edges),
                        ("path", path_points), ("trajectory", traj_points)):
        if value is None:
            log.info("render: no %s layer", name)

    t0 = time.perf_counter()
    svg = render_svg(grid, barriers, tree_edges, path_points, traj_points)
    manifest.stage("render", t0)

    out_path = f"{args.out}.svg"
    with open(out_path, "w") as f:
        f.write(svg)
    manifest.add_output(out_path)
    manifest.write(args.out)
    print(f"wrote {out_path}")
    return EXIT_OK


def _write_path_csv(path: str, nodes) -> None:
    with open(path, "w") as f:
        f.write("x1,x2,theta,cost\n")
        for node in nodes:
            s = node.state
            f.write(f"{s.x1!r},{s.x2!r},{s.theta!r},{node.cost!r}\n")


def _write_tree_csv(path: str, tree) -> None:
    with open(path, "w") as f:
        f.write("id,parent,x1,x2,theta,cost\n")
        for node in tree.nodes:
            parent = -1 if node.parent is None else node.parent
            s = node.state
            f.write(f"{node.id},{parent},{s.x1!r},{s.x2!r},{s.theta!r},{node.cost!r}\n")


def _write_traj_csv(path: str, traj) -> None:
    with open(path, "w") as f:
        f.write("t,x1,x2,theta,omega,min_h\n")
        for t, state, omega, min_h in traj.samples:
            f.write(f"{t!r},{state.x1!r},{state.x2!r},{state.theta!r},"
                    f"{omega!r},{min_h!r}\n")


def _read_path_csv(path: str) -> list[tuple[float, float, float]]:
    waypoints = []
    with open(path, "r") as f:
        header = f.readline().strip().split(",")
        if header[:3] != ["x1", "x2", "theta"]:
            raise ConfigError(f"{path}: not a path CSV (header {header})")
        for line in f:
            if not line.strip():
                continue
            fields = line.split(",")
            waypoints.append((float(fields[0]), float(fields[1]), float(fields[2])))
    return waypoints


def _tree_edges_from_csv(path: str) -> list[tuple[float, float, float, float]]:
    positions: dict[int, tuple[float, float]] = {}
    parents: dict[int, int] = {}
    with open(path, "r") as f:
        header = f.readline().strip().split(",")
        if header[:4] != ["id", "parent", "x1", "x2"]:
            raise ConfigError(f"{path}: not a tree CSV (header {header})")
        for line in f:
            if not line.strip():
                continue
            fields = line.split(",")
            nid, parent = int(fields[0]), int(fields[1])
            positions[nid] = (float(fields[2]), float(fields[3]))
            parents[nid] = parent
    edges = []
    for nid, parent in parents.items():
        if parent >= 0:
            px, py = positions[parent]
            x, y = positions[nid]
            edges.append((px, py, x, y))
    return edges


def _traj_points_from_csv(path: str) -> list[tuple[float, float]]:
    points = []
    with open(path, "r") as f:
        header = f.readline().strip().split(",")
        if header[:3] != ["t", "x1", "x2"]:
            raise ConfigError(f"{path}: not a trajectory CSV (header {header})")
        for line in f:
            if not line.strip():
                continue
            fields = line.split(",")
            points.append((float(fields[1]), float(fields[2])))
    return points


if __name__ == "__main__":
    sys.exit(main())
