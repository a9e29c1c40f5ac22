"""Social force walking model for simulated humans.

One step integrates a drive toward the goal plus exponential repulsion from
other agents and from obstacle segments. Pure arithmetic on the inputs, so
mirrored setups produce mirrored trajectories exactly.
"""
from __future__ import annotations

import numpy as np

DESIRED_SPEED = 1.3
RELAX_TIME = 0.5
AGENT_A = 2.1
AGENT_B = 0.3
OBSTACLE_A = 10.0
OBSTACLE_B = 0.2
SPEED_CAP = 2.0
AGENT_RADIUS = 0.3


def social_force_step(
    position: np.ndarray,
    velocity: np.ndarray,
    goal,
    *,
    dt: float,
    neighbors=(),
    obstacles=(),
    desired_speed: float = DESIRED_SPEED,
    radius: float = AGENT_RADIUS,
    neighbor_radius: float = AGENT_RADIUS,
) -> tuple[np.ndarray, np.ndarray]:
    """Advance one agent by dt; returns (new position, new velocity).

    neighbors: (k, 2) positions of other agents. obstacles: (n, 2, 2)
    segments. goal None means the agent just brakes.
    """
    p = np.asarray(position, dtype=float).reshape(2)
    v = np.asarray(velocity, dtype=float).reshape(2)

    if goal is None:
        force = -v / RELAX_TIME
    else:
        to_goal = np.asarray(goal, dtype=float) - p
        dist = float(np.linalg.norm(to_goal))
        e = to_goal / dist if dist > 1e-9 else np.zeros(2)
        force = (desired_speed * e - v) / RELAX_TIME

    neighbors = np.asarray(neighbors, dtype=float).reshape(-1, 2)
    if len(neighbors):
        rel = p - neighbors
        d = np.linalg.norm(rel, axis=1)
        d = np.maximum(d, 1e-9)
        mag = AGENT_A * np.exp((radius + neighbor_radius - d) / AGENT_B)
        force = force + (rel * (mag / d)[:, None]).sum(axis=0)

    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 2, 2)
    if len(obstacles):
        a = obstacles[:, 0]
        ab = obstacles[:, 1] - a
        denom = np.einsum("ij,ij->i", ab, ab)
        denom = np.maximum(denom, 1e-18)
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / denom, 0.0, 1.0)
        closest = a + t[:, None] * ab
        rel = p - closest
        d = np.linalg.norm(rel, axis=1)
        d = np.maximum(d, 1e-9)
        mag = OBSTACLE_A * np.exp((radius - d) / OBSTACLE_B)
        force = force + (rel * (mag / d)[:, None]).sum(axis=0)

    v_new = v + force * dt
    speed = float(np.linalg.norm(v_new))
    if speed > SPEED_CAP:
        v_new = v_new * (SPEED_CAP / speed)
    return p + v_new * dt, v_new
