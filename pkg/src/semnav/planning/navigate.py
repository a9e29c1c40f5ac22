"""Global route planning over social cost layers, and the local tracker.

plan_static runs A* on the 8-connected grid with a linearly weighted cost
(length, safety, disturbance). refine_dynamic forward-simulates the robot
through conversational groups with the social force model and splices the
simulated trace into the path. dwa_local turns the path into velocity
commands one dynamic window at a time.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..geometry import Pose2
from ..scan import LaserScan
from ..world.social import social_force_step
from .costmap import (
    DEFAULT_PLANNER_CONFIG,
    FREE,
    CostGrid,
    HumanPose,
    PlannerConfig,
    detect_groups,
)
from .follow import RobotConfig

SQRT2 = math.sqrt(2.0)


class NoPath(RuntimeError):
    """The goal cell cannot be reached through free space."""


class RefinementDiverged(RuntimeError):
    """A simulated rollout left the corridor around its path section."""


@dataclass
class PlannedPath:
    """A route with its cost components kept separate for inspection."""

    waypoints: np.ndarray
    length_cost: float
    safety_cost: float
    disturbance_cost: float
    refined: bool = False


def path_costs(grid: CostGrid, waypoints: np.ndarray) -> tuple:
    """(length, safety, disturbance) sums along a waypoint sequence.

    Safety and disturbance are sampled at the cell of each waypoint after
    the first; waypoints outside the grid contribute nothing.
    """
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if len(wp) < 2:
        return 0.0, 0.0, 0.0
    lengths, safety, disturbance = [], [], []
    for a, b in zip(wp, wp[1:]):
        lengths.append(math.hypot(b[0] - a[0], b[1] - a[1]))
        ix, iy = grid.world_to_cell(b)
        if grid.in_bounds(ix, iy):
            safety.append(float(grid.safety[iy, ix]))
            disturbance.append(float(grid.disturbance[iy, ix]))
    return math.fsum(lengths), math.fsum(safety), math.fsum(disturbance)


def weighted_cost(path: PlannedPath, weights: tuple) -> float:
    return (
        weights[0] * path.length_cost
        + weights[1] * path.safety_cost
        + weights[2] * path.disturbance_cost
    )


def plan_static(grid: CostGrid, start: np.ndarray, goal: np.ndarray,
                weights: tuple = None,
                config: PlannerConfig = DEFAULT_PLANNER_CONFIG) -> PlannedPath:
    """A* over free cells minimizing weighted length + safety + disturbance.

    The heuristic stays on the length term only, which keeps it admissible
    because the other terms are non-negative.
    """
    w = tuple(weights) if weights is not None else tuple(config.weights)
    w_len, w_safe, w_dist = w
    res = grid.resolution
    start_cell = grid.world_to_cell(start)
    goal_cell = grid.world_to_cell(goal)
    for name, cell in (("start", start_cell), ("goal", goal_cell)):
        if not grid.in_bounds(*cell):
            raise ValueError(f"{name} cell {cell} outside the grid")
        if grid.occupancy[cell[1], cell[0]] != FREE:
            raise ValueError(f"{name} cell {cell} is not free")
    if start_cell == goal_cell:
        wp = np.array([grid.cell_to_world(*start_cell)])
        return PlannedPath(wp, 0.0, 0.0, 0.0, refined=False)

    occupancy = grid.occupancy
    safety = grid.safety
    disturbance = grid.disturbance
    width, height = grid.width, grid.height
    gx, gy = goal_cell

    def heuristic(ix, iy):
        return w_len * res * math.hypot(ix - gx, iy - gy)

    g = {start_cell: 0.0}
    parent = {}
    closed = set()
    heap = [(heuristic(*start_cell), 0, start_cell)]
    counter = 0
    while heap:
        _, _, cell = heapq.heappop(heap)
        if cell in closed:
            continue
        if cell == goal_cell:
            break
        closed.add(cell)
        ix, iy = cell
        base = g[cell]
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nx, ny = ix + dx, iy + dy
                if not (0 <= nx < width and 0 <= ny < height):
                    continue
                if occupancy[ny, nx] != FREE:
                    continue
                step = res * SQRT2 if dx and dy else res
                cand = base + w_len * step + w_safe * safety[ny, nx] + w_dist * disturbance[ny, nx]
                if cand < g.get((nx, ny), math.inf):
                    g[(nx, ny)] = cand
                    parent[(nx, ny)] = cell
                    counter += 1
                    heapq.heappush(heap, (cand + heuristic(nx, ny), counter, (nx, ny)))
    else:
        raise NoPath(f"no route from {start_cell} to {goal_cell}")

    cells = [goal_cell]
    while cells[-1] != start_cell:
        cells.append(parent[cells[-1]])
    cells.reverse()
    wp = np.array([grid.cell_to_world(ix, iy) for ix, iy in cells])
    length, safe, dist = path_costs(grid, wp)
    return PlannedPath(wp, length, safe, dist, refined=False)


def _polyline_cumlen(wp: np.ndarray) -> np.ndarray:
    steps = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _point_at_arc(wp: np.ndarray, cum: np.ndarray, s: float) -> np.ndarray:
    if s <= 0.0:
        return wp[0].copy()
    if s >= cum[-1]:
        return wp[-1].copy()
    k = int(np.searchsorted(cum, s, side="right")) - 1
    seg = cum[k + 1] - cum[k]
    t = (s - cum[k]) / seg if seg > 1e-12 else 0.0
    return wp[k] + t * (wp[k + 1] - wp[k])


def _project_arc(wp: np.ndarray, cum: np.ndarray, p: np.ndarray) -> tuple:
    """(arc length, distance) of the closest point on the polyline."""
    if len(wp) == 1:
        return 0.0, float(np.linalg.norm(p - wp[0]))
    best_d, best_s = math.inf, 0.0
    for k in range(len(wp) - 1):
        a = wp[k]
        ab = wp[k + 1] - a
        L2 = float(ab @ ab)
        if L2 < 1e-24:
            continue
        t = min(max(float((p - a) @ ab) / L2, 0.0), 1.0)
        close = a + t * ab
        d = float(np.linalg.norm(p - close))
        if d < best_d:
            best_d = d
            best_s = float(cum[k]) + t * math.sqrt(L2)
    return best_s, best_d


def _simulate_section(section: np.ndarray, humans: Sequence[HumanPose],
                      v0: np.ndarray, obstacles, config: PlannerConfig) -> np.ndarray:
    """Drive a social-force robot along the section among reactive humans.

    The goal is a carrot sliding along the static section; every agent is
    advanced synchronously from the previous step's state. Raises
    RefinementDiverged when the robot leaves the corridor or stalls out.
    """
    cum = _polyline_cumlen(section)
    total = float(cum[-1])
    robot_p = section[0].astype(float).copy()
    robot_v = v0.astype(float).copy()
    hum_p = [h.position.copy() for h in humans]
    hum_v = [np.zeros(2) for _ in humans]
    trace = [robot_p.copy()]
    s = 0.0
    max_steps = int(3.0 * total / (config.refine_robot_speed * config.refine_dt)) + 200
    for _ in range(max_steps):
        s = min(s + config.refine_robot_speed * config.refine_dt, total)
        carrot = _point_at_arc(section, cum, s)
        new_rp, new_rv = social_force_step(
            robot_p, robot_v, carrot,
            dt=config.refine_dt,
            neighbors=np.array(hum_p) if hum_p else (),
            obstacles=obstacles,
            desired_speed=config.refine_robot_speed,
            radius=config.radius,
        )
        new_hp, new_hv = [], []
        for k, h in enumerate(humans):
            others = [robot_p] + [q for m, q in enumerate(hum_p) if m != k]
            pn, vn = social_force_step(
                hum_p[k], hum_v[k], h.position,
                dt=config.refine_dt,
                neighbors=np.array(others),
                obstacles=obstacles,
                desired_speed=config.refine_human_speed,
            )
            new_hp.append(pn)
            new_hv.append(vn)
        robot_p, robot_v, hum_p, hum_v = new_rp, new_rv, new_hp, new_hv
        trace.append(robot_p.copy())
        _, dev = _project_arc(section, cum, robot_p)
        if dev > config.diverge_limit:
            raise RefinementDiverged("rollout left the section corridor")
        if s >= total and float(np.linalg.norm(robot_p - section[-1])) <= config.refine_goal_tol:
            return np.array(trace)
    raise RefinementDiverged("rollout never reached the section end")


def refine_dynamic(path: PlannedPath, humans: Sequence[HumanPose], robot: Pose2,
                   grid: CostGrid = None, *, obstacles=(),
                   config: PlannerConfig = DEFAULT_PLANNER_CONFIG) -> PlannedPath:
    """Replace path sections that cross group regions with simulated traces.

    Sections more than the margin away from every group pass through
    unchanged; a section whose rollout diverges keeps its static geometry.
    The refined flag reports whether this call replaced anything.
    """
    regions = detect_groups(humans, config)
    wp = path.waypoints
    if not regions or len(wp) < 2:
        return replace(path, refined=False)

    inside = np.array(
        [any(r.contains(p, margin=config.refine_margin) for r in regions) for p in wp]
    )
    if not inside.any():
        return replace(path, refined=False)

    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 2, 2)
    pieces = []
    replaced = False
    i = 0
    while i < len(wp):
        if not inside[i]:
            pieces.append(wp[i : i + 1])
            i += 1
            continue
        j = i
        while j + 1 < len(wp) and inside[j + 1]:
            j += 1
        section = wp[i : j + 1]
        if len(section) < 2:
            pieces.append(section)
            i = j + 1
            continue
        if i == 0:
            v0 = np.array([math.cos(robot.theta), math.sin(robot.theta)])
        else:
            v0 = section[1] - section[0]
            n = float(np.linalg.norm(v0))
            v0 = v0 / n if n > 1e-12 else np.zeros(2)
        v0 = v0 * config.refine_robot_speed
        try:
            trace = _simulate_section(section, humans, v0, obstacles, config)
        except RefinementDiverged:
            pieces.append(section)
        else:
            pieces.append(trace)
            pieces.append(wp[j : j + 1])
            replaced = True
        i = j + 1

    if not replaced:
        return replace(path, refined=False)
    new_wp = np.concatenate(pieces, axis=0)
    if grid is not None:
        length, safe, dist = path_costs(grid, new_wp)
    else:
        steps = [math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(new_wp, new_wp[1:])]
        length = math.fsum(steps)
        safe, dist = path.safety_cost, path.disturbance_cost
    return PlannedPath(new_wp, length, safe, dist, refined=True)


def dwa_local(path: PlannedPath, state: RobotConfig, scan: LaserScan,
              config: PlannerConfig = DEFAULT_PLANNER_CONFIG) -> tuple:
    """One dynamic-window step tracking the path; zero command when boxed in.

    Scores each sampled velocity by progress along the path, clearance to
    the scan, and heading toward a carrot ahead of the robot's projection.
    """
    wp = np.asarray(path.waypoints, dtype=float).reshape(-1, 2)
    cum = _polyline_cumlen(wp) if len(wp) > 1 else np.zeros(1)
    p_now = np.array([state.x, state.y])
    s0, _ = _project_arc(wp, cum, p_now)
    carrot = _point_at_arc(wp, cum, s0 + config.carrot_distance) if len(wp) > 1 else wp[0]

    pts = scan.points_map()
    v_lo = max(-config.v_max, state.v - config.accel_v * config.dwa_dt)
    v_hi = min(config.v_max, state.v + config.accel_v * config.dwa_dt)
    w_lo = max(-config.omega_max, state.omega - config.accel_omega * config.dwa_dt)
    w_hi = min(config.omega_max, state.omega + config.accel_omega * config.dwa_dt)

    best = None
    for iv in range(config.v_samples):
        v = v_lo + (v_hi - v_lo) * iv / (config.v_samples - 1)
        for iw in range(config.omega_samples):
            w = w_lo + (w_hi - w_lo) * iw / (config.omega_samples - 1)
            if abs(w) < 1e-9:
                nx = state.x + v * math.cos(state.theta) * config.dwa_dt
                ny = state.y + v * math.sin(state.theta) * config.dwa_dt
            else:
                r = v / w
                nth0 = state.theta
                nx = state.x + r * (math.sin(nth0 + w * config.dwa_dt) - math.sin(nth0))
                ny = state.y - r * (math.cos(nth0 + w * config.dwa_dt) - math.cos(nth0))
            nth = state.theta + w * config.dwa_dt
            if len(pts):
                d_min = float(np.min(np.hypot(pts[:, 0] - nx, pts[:, 1] - ny)))
                if d_min < config.radius:
                    continue
                clear = min(d_min, config.clearance_cap) / config.clearance_cap
            else:
                clear = 1.0
            s_new, _ = _project_arc(wp, cum, np.array([nx, ny]))
            prog = (s_new - s0) / (config.v_max * config.dwa_dt)
            prog = min(max(prog, -1.0), 1.0)
            to_c = carrot - np.array([nx, ny])
            if float(np.linalg.norm(to_c)) < 1e-9:
                head = 1.0
            else:
                head = 0.5 * (1.0 + math.cos(nth - math.atan2(to_c[1], to_c[0])))
            score = (
                config.dwa_weights[0] * prog
                + config.dwa_weights[1] * clear
                + config.dwa_weights[2] * head
            )
            if best is None or score > best[0]:
                best = (score, v, w)
    if best is None:
        return 0.0, 0.0
    return float(best[1]), float(best[2])
