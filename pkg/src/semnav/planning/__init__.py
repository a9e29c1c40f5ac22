"""Motion planning: person following, social cost maps, global and local
navigation."""
from .costmap import (
    DEFAULT_PLANNER_CONFIG,
    FREE,
    OCCUPIED,
    UNKNOWN,
    CostGrid,
    GroupRegion,
    HumanPose,
    PlannerConfig,
    build_cost_layers,
    detect_groups,
    disturbance_at,
    facing_factor,
    load_planner_config,
    occupancy_from_segments,
    occupancy_from_world,
    safety_at,
)
from .follow import (
    DEFAULT_FOLLOW_CONFIG,
    FollowAction,
    FollowConfig,
    FollowLost,
    NoFeasibleAction,
    PersonState,
    RobotConfig,
    goal_function,
    plan_follow,
    predict_person,
    predict_person_states,
)
from .navigate import (
    NoPath,
    PlannedPath,
    RefinementDiverged,
    dwa_local,
    path_costs,
    plan_static,
    refine_dynamic,
    weighted_cost,
)

__all__ = [
    "DEFAULT_FOLLOW_CONFIG",
    "DEFAULT_PLANNER_CONFIG",
    "FREE",
    "OCCUPIED",
    "UNKNOWN",
    "CostGrid",
    "FollowAction",
    "FollowConfig",
    "FollowLost",
    "GroupRegion",
    "HumanPose",
    "NoFeasibleAction",
    "NoPath",
    "PersonState",
    "PlannedPath",
    "PlannerConfig",
    "RefinementDiverged",
    "RobotConfig",
    "build_cost_layers",
    "detect_groups",
    "disturbance_at",
    "dwa_local",
    "facing_factor",
    "goal_function",
    "load_planner_config",
    "occupancy_from_segments",
    "occupancy_from_world",
    "path_costs",
    "plan_follow",
    "plan_static",
    "predict_person",
    "predict_person_states",
    "refine_dynamic",
    "safety_at",
    "weighted_cost",
]
