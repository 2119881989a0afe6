"""Run configuration: flat ``key = value`` files with dotted sections.

Unknown keys are rejected so a manifest's config snapshot pins a run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cbf import CbfGains
from .planner import PlannerConfig


class ConfigError(ValueError):
    """A config file is malformed or contains unknown/invalid keys."""


def _fraction(v: str) -> float:
    x = float(v)
    if not 0.0 <= x < 1.0:
        raise ValueError(f"must be in [0, 1), got {x}")
    return x


def _positive(v: str) -> float:
    x = float(v)
    if x <= 0:
        raise ValueError(f"must be > 0, got {x}")
    return x


def _non_negative(v: str) -> float:
    x = float(v)
    if x < 0:
        raise ValueError(f"must be >= 0, got {x}")
    return x


def _positive_int(v: str) -> int:
    x = int(v)
    if x < 1:
        raise ValueError(f"must be >= 1, got {x}")
    return x


# key -> (parser, default); None default means "only required by some commands"
SCHEMA: dict[str, tuple] = {
    "planner.v": (_positive, 0.2),
    "planner.k0": (_positive, 4.0),
    "planner.k1": (_positive, 2.0),
    "planner.ds": (_non_negative, 0.2),
    "planner.u_ref": (float, 0.0),
    "planner.u_min": (float, -1.0),
    "planner.u_max": (float, 1.0),
    "planner.steps": (_positive_int, 4),
    "planner.dt": (_positive, 1.0),
    "planner.max_iterations": (_positive_int, 120),
    "planner.goal_radius": (_positive, 0.3),
    "planner.near_radius_gamma": (_positive, 10.0),
    "planner.goal_bias": (_fraction, 0.05),
    "planner.seed": (int, 0),
    "planner.start_x": (float, None),
    "planner.start_y": (float, None),
    "planner.goal_x": (float, None),
    "planner.goal_y": (float, None),
    "fit.spacing": (_positive, 0.05),
    "sim.dt": (_positive, 0.01),
    "sim.heading_gain": (_positive, 1.5),
    "sim.capture_radius": (_positive, 0.15),
    "sim.timeout": (_positive, None),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration for one CLI run."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def planner_config(self, seed: int | None = None) -> PlannerConfig:
        v = self.values
        return PlannerConfig(
            v=v["planner.v"],
            gains=CbfGains(v["planner.k0"], v["planner.k1"]),
            ds=v["planner.ds"],
            u_ref=v["planner.u_ref"],
            u_min=v["planner.u_min"],
            u_max=v["planner.u_max"],
            steps=v["planner.steps"],
            dt=v["planner.dt"],
            max_iterations=v["planner.max_iterations"],
            goal_radius=v["planner.goal_radius"],
            near_radius_gamma=v["planner.near_radius_gamma"],
            goal_bias=v["planner.goal_bias"],
            rng_seed=v["planner.seed"] if seed is None else seed,
        )

    def start(self) -> tuple[float, float]:
        return self._point("planner.start_x", "planner.start_y")

    def goal(self) -> tuple[float, float]:
        return self._point("planner.goal_x", "planner.goal_y")

    def _point(self, kx: str, ky: str) -> tuple[float, float]:
        if self.values[kx] is None or self.values[ky] is None:
            raise ConfigError(f"config must set {kx} and {ky} for this command")
        return self.values[kx], self.values[ky]


def parse_config(text: str) -> RunConfig:
    """Parse config text. Blank lines and ``#`` comments are ignored."""
    values = {key: default for key, (_, default) in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: invalid value for {key}: {exc}") from exc
    return RunConfig(values)


def load_config(path: str) -> RunConfig:
    with open(path, "r") as f:
        return parse_config(f.read())


def config_snapshot(config: RunConfig) -> dict:
    """JSON-ready snapshot of every config value."""
    return dict(sorted(config.values.items()))
