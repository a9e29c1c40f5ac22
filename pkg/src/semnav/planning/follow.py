"""Person following by exhaustive trajectory-tree search.

Every replanning cycle expands a depth-limited tree of unicycle actions
breadth first: each node branches into a dynamic-window grid of velocity
samples, children colliding with the inflated laser scan are pruned, and
every surviving node earns the value of a person-relative goal function
evaluated against the person's predicted position for that tree level.
The command returned is the first action of the highest-scoring path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ..perception.tracker import PersonTrack
from ..scan import LaserScan

V_LIMIT = 0.9
OMEGA_LIMIT = 1.2


class NoFeasibleAction(Exception):
    """Every branch of the trajectory tree collided; stop the robot."""


class FollowLost(Exception):
    """The followed person's track went stale; stop and tell the operator."""


@dataclass(frozen=True)
class FollowConfig:
    depth: int = 3
    dt: float = 0.4
    v_samples: int = 7
    omega_samples: int = 5
    v_max: float = V_LIMIT
    omega_max: float = OMEGA_LIMIT
    accel_v: float = 0.5            # m/s^2
    accel_omega: float = 1.5        # rad/s^2
    radius: float = 0.35            # obstacle inflation, m
    bump_behind: tuple = (-1.0, 0.0)
    bump_right: tuple = (-1.0, -0.8)
    bump_width: float = 0.18        # squared-offset scale inside the exponential
    lost_timeout: float = 1.5       # s without track updates before FollowLost


DEFAULT_FOLLOW_CONFIG = FollowConfig()


@dataclass(frozen=True)
class RobotConfig:
    x: float
    y: float
    theta: float
    v: float
    omega: float

    def __post_init__(self) -> None:
        if abs(self.v) > V_LIMIT + 1e-9:
            raise ValueError(f"|v| = {abs(self.v):.3f} exceeds {V_LIMIT} m/s")
        if abs(self.omega) > OMEGA_LIMIT + 1e-9:
            raise ValueError(f"|omega| = {abs(self.omega):.3f} exceeds {OMEGA_LIMIT} rad/s")


@dataclass(frozen=True)
class FollowAction:
    v: float
    omega: float
    dt: float


@dataclass(frozen=True)
class PersonState:
    x: float
    y: float
    theta: float


def predict_person(track: PersonTrack, steps: int, dt: float) -> list[np.ndarray]:
    """Constant-velocity extrapolation of the track, one point per level.

    Index 0 is the current position; index k the mean after k prediction
    steps of the tracking filter.
    """
    if steps < 1:
        raise ValueError("need at least one prediction step")
    p = np.asarray(track.state[:2], dtype=float)
    v = np.asarray(track.state[2:], dtype=float)
    return [p + v * (k * dt) for k in range(steps + 1)]


def predict_person_states(
    track: PersonTrack,
    steps: int,
    dt: float,
    fallback_heading: Optional[float] = None,
) -> list[PersonState]:
    """Predicted positions plus a heading read from the track velocity.

    A near-stationary person has no velocity direction to speak of; the
    caller supplies the heading to assume then (last known, or 0).
    """
    points = predict_person(track, steps, dt)
    vx, vy = float(track.state[2]), float(track.state[3])
    if math.hypot(vx, vy) > 0.05:
        heading = math.atan2(vy, vx)
    else:
        heading = fallback_heading if fallback_heading is not None else 0.0
    return [PersonState(float(p[0]), float(p[1]), heading) for p in points]


def _goal_many(
    x: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    person: PersonState,
    config: FollowConfig,
) -> np.ndarray:
    c, s = math.cos(person.theta), math.sin(person.theta)
    dx = x - person.x
    dy = y - person.y
    ox = c * dx + s * dy
    oy = -s * dx + c * dy
    bx1, by1 = config.bump_behind
    bx2, by2 = config.bump_right
    d1 = (ox - bx1) ** 2 + (oy - by1) ** 2
    d2 = (ox - bx2) ** 2 + (oy - by2) ** 2
    bump = np.maximum(np.exp(-d1 / config.bump_width), np.exp(-d2 / config.bump_width))
    align = 0.5 * (1.0 + np.cos(theta - person.theta))
    return bump * align


def goal_function(
    q: RobotConfig, person: PersonState, config: FollowConfig = DEFAULT_FOLLOW_CONFIG
) -> float:
    """Desirability of a robot configuration relative to the person, in [0, 1].

    Two radial bumps in the person's frame, one directly behind and one
    behind-right, scaled by how well the robot heading matches theirs.
    """
    g = _goal_many(
        np.asarray([q.x]), np.asarray([q.y]), np.asarray([q.theta]), person, config
    )
    return float(g[0])


def plan_follow(
    q0: RobotConfig,
    person: Sequence[PersonState],
    scan: LaserScan,
    depth: int,
    config: FollowConfig = DEFAULT_FOLLOW_CONFIG,
) -> list[FollowAction]:
    """Best action sequence over the full dynamic-window tree.

    person[k] is the predicted person state at tree level k (k = 0 is now),
    so the sequence must be one longer than the depth. Node positions that
    come within config.radius of a scan return are pruned with their whole
    subtree. Raises NoFeasibleAction when nothing survives.
    """
    if not 1 <= depth <= 4:
        raise ValueError("tree depth must be in [1, 4]")
    if len(person) <= depth:
        raise ValueError("need a person state for every tree level")

    points = scan.points_map()
    tree = cKDTree(points) if len(points) else None
    frac_v = np.linspace(0.0, 1.0, config.v_samples)
    frac_w = np.linspace(0.0, 1.0, config.omega_samples)
    fan = config.v_samples * config.omega_samples

    x = np.array([q0.x])
    y = np.array([q0.y])
    theta = np.array([q0.theta])
    v = np.array([q0.v])
    w = np.array([q0.omega])
    util = np.zeros(1)
    levels: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    for k in range(1, depth + 1):
        v_lo = np.maximum(-config.v_max, v - config.accel_v * config.dt)
        v_hi = np.minimum(config.v_max, v + config.accel_v * config.dt)
        w_lo = np.maximum(-config.omega_max, w - config.accel_omega * config.dt)
        w_hi = np.minimum(config.omega_max, w + config.accel_omega * config.dt)
        vv = v_lo[:, None] + (v_hi - v_lo)[:, None] * frac_v[None, :]
        ww = w_lo[:, None] + (w_hi - w_lo)[:, None] * frac_w[None, :]
        parent = np.repeat(np.arange(len(x)), fan)
        v_new = np.repeat(vv, config.omega_samples, axis=1).reshape(-1)
        w_new = np.tile(ww, (1, config.v_samples)).reshape(-1)
        x_new = x[parent] + v_new * np.cos(theta[parent]) * config.dt
        y_new = y[parent] + v_new * np.sin(theta[parent]) * config.dt
        th_new = theta[parent] + w_new * config.dt
        if tree is not None:
            dist, _ = tree.query(np.column_stack([x_new, y_new]), k=1)
            keep = dist >= config.radius
            if not np.any(keep):
                raise NoFeasibleAction(f"all branches pruned at depth {k}")
            parent, v_new, w_new = parent[keep], v_new[keep], w_new[keep]
            x_new, y_new, th_new = x_new[keep], y_new[keep], th_new[keep]
        util = util[parent] + _goal_many(x_new, y_new, th_new, person[k], config)
        levels.append((parent, v_new, w_new))
        x, y, theta, v, w = x_new, y_new, th_new, v_new, w_new

    idx = int(np.argmax(util))
    actions: list[FollowAction] = []
    for parent, v_new, w_new in reversed(levels):
        actions.append(FollowAction(float(v_new[idx]), float(w_new[idx]), config.dt))
        idx = int(parent[idx])
    actions.reverse()
    return actions
