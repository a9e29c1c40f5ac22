"""Cost layers for planning around people.

Beyond plain occupancy the planner prices two social effects: a safety bubble
around every person (Gaussian in distance, hard cutoff), and a disturbance
band between pairs who are engaged with each other, so paths prefer not to
cut through a conversation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..geometry import Pose2, points_segment_distance

FREE = 0
OCCUPIED = 1
UNKNOWN = 2


@dataclass(frozen=True)
class PlannerConfig:
    """Tunables for the cost layers, the grid search and the local tracker."""

    resolution: float = 0.1
    sigma_safety: float = 0.45
    safety_cutoff: float = 2.0
    pair_cutoff: float = 3.0
    band_halfwidth: float = 0.4
    facing_threshold: float = 0.2
    group_inflation: float = 0.5
    weights: tuple = (1.0, 3.0, 5.0)
    refine_margin: float = 1.0
    refine_dt: float = 0.1
    refine_robot_speed: float = 0.9
    refine_human_speed: float = 0.8
    refine_goal_tol: float = 0.25
    diverge_limit: float = 2.0
    max_spacing: float = 0.3
    carrot_distance: float = 0.8
    dwa_weights: tuple = (0.6, 0.2, 0.2)
    clearance_cap: float = 1.0
    v_max: float = 0.9
    omega_max: float = 1.2
    accel_v: float = 0.5
    accel_omega: float = 1.5
    dwa_dt: float = 0.4
    v_samples: int = 7
    omega_samples: int = 5
    radius: float = 0.35


DEFAULT_PLANNER_CONFIG = PlannerConfig()

_TUPLE_KEYS = ("weights", "dwa_weights")


def load_planner_config(source: Union[str, Path, dict]) -> PlannerConfig:
    """Build a config from a JSON file or a plain dict; unknown keys error."""
    if isinstance(source, dict):
        doc = dict(source)
    else:
        doc = json.loads(Path(source).read_text())
    known = {f.name for f in fields(PlannerConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown planner config keys: {sorted(unknown)}")
    for key in _TUPLE_KEYS:
        if key in doc:
            doc[key] = tuple(float(v) for v in doc[key])
    return replace(DEFAULT_PLANNER_CONFIG, **doc)


@dataclass
class HumanPose:
    position: np.ndarray
    orientation: float
    group_id: Optional[int] = None

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float).reshape(2)


@dataclass
class CostGrid:
    """Axis grid of occupancy plus social cost layers, row-major [iy, ix]."""

    resolution: float
    origin: Pose2
    width: int
    height: int
    occupancy: np.ndarray
    safety: np.ndarray
    disturbance: np.ndarray

    def __post_init__(self) -> None:
        shape = (self.height, self.width)
        for name in ("occupancy", "safety", "disturbance"):
            layer = getattr(self, name)
            if layer.shape != shape:
                raise ValueError(f"{name} layer shape {layer.shape} != {shape}")
        if not (np.isfinite(self.safety).all() and np.isfinite(self.disturbance).all()):
            raise ValueError("cost layers must be finite")

    @staticmethod
    def blank(width: int, height: int, resolution: float = 0.1,
              origin: Pose2 = Pose2()) -> "CostGrid":
        return CostGrid(
            resolution=resolution,
            origin=origin,
            width=width,
            height=height,
            occupancy=np.full((height, width), FREE, dtype=np.uint8),
            safety=np.zeros((height, width)),
            disturbance=np.zeros((height, width)),
        )

    def cell_centers(self) -> np.ndarray:
        """World coordinates of every cell center, shape (height, width, 2)."""
        lx = (np.arange(self.width) + 0.5) * self.resolution
        ly = (np.arange(self.height) + 0.5) * self.resolution
        gx, gy = np.meshgrid(lx, ly)
        local = np.stack([gx, gy], axis=-1)
        r = self.origin.rot2()
        return local @ r.T + self.origin.translation()

    def cell_to_world(self, ix: int, iy: int) -> np.ndarray:
        return self.origin.to_map(
            np.array([(ix + 0.5) * self.resolution, (iy + 0.5) * self.resolution])
        )

    def world_to_cell(self, p: np.ndarray) -> tuple:
        local = self.origin.to_local(np.asarray(p, dtype=float))
        return int(np.floor(local[0] / self.resolution)), int(
            np.floor(local[1] / self.resolution)
        )

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / n if n > 1e-12 else np.zeros_like(v)


def facing_factor(a: HumanPose, b: HumanPose) -> float:
    """Mutual engagement of a pair: 1 facing each other, 0 back to back."""
    u = _unit(b.position - a.position)
    if not u.any():
        return 0.0
    ga = max(0.0, math.cos(a.orientation) * u[0] + math.sin(a.orientation) * u[1])
    gb = max(0.0, -(math.cos(b.orientation) * u[0] + math.sin(b.orientation) * u[1]))
    return ga * gb


def safety_at(points: np.ndarray, humans: Sequence[HumanPose],
              config: PlannerConfig = DEFAULT_PLANNER_CONFIG) -> np.ndarray:
    """Safety cost at each point: max over humans of a cut-off Gaussian."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.zeros(len(pts))
    denom = 2.0 * config.sigma_safety**2
    for h in humans:
        d2 = ((pts - h.position) ** 2).sum(axis=1)
        v = np.exp(-d2 / denom)
        v[d2 > config.safety_cutoff**2] = 0.0
        np.maximum(out, v, out=out)
    return out


def disturbance_at(points: np.ndarray, humans: Sequence[HumanPose],
                   config: PlannerConfig = DEFAULT_PLANNER_CONFIG) -> np.ndarray:
    """Disturbance cost: max over engaged pairs of a banded line cost."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.zeros(len(pts))
    for i in range(len(humans)):
        for j in range(i + 1, len(humans)):
            a, b = humans[i], humans[j]
            d = float(np.linalg.norm(b.position - a.position))
            if d >= config.pair_cutoff:
                continue
            f = facing_factor(a, b)
            if f <= 0.0:
                continue
            scale = f * (1.0 - d / config.pair_cutoff)
            band = points_segment_distance(pts, a.position, b.position)
            v = np.where(band <= config.band_halfwidth, scale, 0.0)
            np.maximum(out, v, out=out)
    return out


def build_cost_layers(grid: CostGrid, humans: Sequence[HumanPose],
                      config: PlannerConfig = DEFAULT_PLANNER_CONFIG) -> CostGrid:
    """Fill the safety and disturbance layers from the given crowd snapshot.

    Pure: returns a new grid sharing the occupancy array.
    """
    centers = grid.cell_centers().reshape(-1, 2)
    shape = (grid.height, grid.width)
    return CostGrid(
        resolution=grid.resolution,
        origin=grid.origin,
        width=grid.width,
        height=grid.height,
        occupancy=grid.occupancy,
        safety=safety_at(centers, humans, config).reshape(shape),
        disturbance=disturbance_at(centers, humans, config).reshape(shape),
    )


@dataclass(frozen=True)
class GroupRegion:
    """Axis-aligned box around one conversational group."""

    members: tuple
    lo: np.ndarray
    hi: np.ndarray

    def contains(self, p: np.ndarray, margin: float = 0.0) -> bool:
        return bool(
            (p[0] >= self.lo[0] - margin)
            and (p[0] <= self.hi[0] + margin)
            and (p[1] >= self.lo[1] - margin)
            and (p[1] <= self.hi[1] + margin)
        )


def detect_groups(humans: Sequence[HumanPose],
                  config: PlannerConfig = DEFAULT_PLANNER_CONFIG) -> list:
    """Merge mutually engaged pairs into group regions.

    An edge joins two people closer than the pair cutoff whose facing factor
    exceeds the threshold; connected components of two or more become one
    inflated bounding box each.
    """
    n = len(humans)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.linalg.norm(humans[j].position - humans[i].position))
            if d < config.pair_cutoff and facing_factor(humans[i], humans[j]) > config.facing_threshold:
                parent[find(i)] = find(j)

    comps = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(i)
    regions = []
    for members in comps.values():
        if len(members) < 2:
            continue
        pts = np.array([humans[i].position for i in members])
        regions.append(
            GroupRegion(
                members=tuple(members),
                lo=pts.min(axis=0) - config.group_inflation,
                hi=pts.max(axis=0) + config.group_inflation,
            )
        )
    regions.sort(key=lambda r: r.members)
    return regions


def occupancy_from_segments(segments: np.ndarray, bounds: tuple,
                            resolution: float = 0.1,
                            inflation: float = 0.35) -> CostGrid:
    """Rasterize obstacle segments into a fresh grid over the given bounds.

    A cell is occupied when its center lies within the inflation radius of
    any segment, so the planner can treat the robot as a point.
    """
    x0, y0, x1, y1 = (float(b) for b in bounds)
    width = max(1, int(round((x1 - x0) / resolution)))
    height = max(1, int(round((y1 - y0) / resolution)))
    grid = CostGrid.blank(width, height, resolution, origin=Pose2(x0, y0, 0.0))
    segs = np.asarray(segments, dtype=float).reshape(-1, 2, 2)
    if len(segs):
        centers = grid.cell_centers().reshape(-1, 2)
        occ = np.zeros(len(centers), dtype=bool)
        for a, b in segs:
            occ |= points_segment_distance(centers, a, b) <= inflation
        grid.occupancy[occ.reshape(height, width)] = OCCUPIED
    return grid


def occupancy_from_world(world, bounds: tuple, resolution: float = 0.1,
                         inflation: float = 0.35) -> CostGrid:
    """Rasterize a world model's walls, door leaves and table outlines."""
    return occupancy_from_segments(world.obstacle_segments(), bounds, resolution, inflation)
