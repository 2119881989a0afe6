"""safeplan: provably collision-free planning on occupancy grids.

Pipeline: fit polynomial barrier functions to obstacle regions by logistic
regression, plan with CBF-QP multi-step steering inside RRT*, validate with a
kinematic rollout, and render the result.
"""

from .barrier import (
    EXPONENT_PAIRS,
    BarrierFunction,
    FitError,
    FitReport,
    default_window_margin,
    eval_h,
    features,
    features_gradient,
    features_hessian,
    fit,
    fit_regions,
    load_barriers,
    logistic_cost,
    save_barriers,
)
from .cbf import (
    CbfGains,
    LinearConstraint,
    QpInfeasibleError,
    RobotState,
    active_barriers,
    constraint_coeffs,
    min_active_h,
    safe_turn_rate,
    solve_qp,
    wrap_angle,
)
from .gridmap import (
    LabeledSample,
    MapFormatError,
    OccupancyGrid,
    Region,
    inflate,
    load_map,
    load_map_file,
    partition_regions,
    sample_labels,
    segment_collision_free,
)
from .planner import (
    PlannerConfig,
    PlanResult,
    StartInCollisionError,
    choose_parent,
    near_indices,
    nearest,
    plan,
    rewire,
    sample_point,
    steer_heading,
)
from .sim import (
    RolloutError,
    RolloutInfeasible,
    RolloutTimeout,
    Trajectory,
    TrajectorySample,
    follow_path,
    step_dynamics,
)
from .steering import SteerOutcome, SteerParams, angle_update, cbf_steer, extend
from .tree import Node, Tree, planar_distance

__version__ = "0.1.0"
