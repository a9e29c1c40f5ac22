"""Ground-truth indoor world: geometry, doors, signs, humans and the robot.

The world lives in a 2D floor plan; walls and doors carry a height so the
plane sensor can report 3D patches. Signs are authored with a small standoff
from their wall face so line-of-sight checks resolve which side sees them.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..geometry import PlaneParams, Pose2, make_plane

WALL_HEIGHT = 2.5
TABLE_HEIGHT = 0.72
DOOR_RATE = 0.5           # swing units per second
DOOR_HOLD_RADIUS = 0.4    # a human this close to the doorway holds the door
HUMAN_RADIUS = 0.3
HUMAN_HEIGHT = 1.7
HUMAN_MAX_SPEED = 2.0
LEG_RADIUS = 0.06
# Between leg centers, across the walking direction. Wide enough that the
# 0.15 m scan segmentation break separates the two leg arcs (surface gap
# 0.32 - 2 * 0.06 = 0.20 m) from any frontal view.
LEG_SPACING = 0.32
TABLE_LEG_RADIUS = 0.03
TABLE_LEG_INSET = 0.05

MODE_WAYPOINTS = "waypoints"
MODE_SFM = "sfm"
MODE_OPERATOR = "operator"
HUMAN_MODES = (MODE_WAYPOINTS, MODE_SFM, MODE_OPERATOR)


class ScenarioError(ValueError):
    """Raised when a scenario document is malformed or inconsistent."""


@dataclass
class Wall:
    a: np.ndarray
    b: np.ndarray
    height: float = WALL_HEIGHT

    def __post_init__(self) -> None:
        self.a = np.asarray(self.a, dtype=float).reshape(2)
        self.b = np.asarray(self.b, dtype=float).reshape(2)
        if np.linalg.norm(self.b - self.a) < 1e-9:
            raise ScenarioError("wall has zero length")
        if self.height <= 0.0:
            raise ScenarioError("wall height must be positive")

    def segment(self) -> np.ndarray:
        return np.array([self.a, self.b])

    def plane(self) -> PlaneParams:
        e = self.b - self.a
        n2 = np.array([-e[1], e[0]]) / np.linalg.norm(e)
        n = np.array([n2[0], n2[1], 0.0])
        return make_plane(n, -float(n2 @ self.a))

    def hull(self) -> np.ndarray:
        a, b, h = self.a, self.b, self.height
        return np.array(
            [[a[0], a[1], 0.0], [b[0], b[1], 0.0], [b[0], b[1], h], [a[0], a[1], h]]
        )


@dataclass
class Table:
    center: np.ndarray
    size: tuple[float, float]
    yaw: float = 0.0
    height: float = TABLE_HEIGHT

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=float).reshape(2)
        self.size = (float(self.size[0]), float(self.size[1]))
        if min(self.size) <= 0.0 or self.height <= 0.0:
            raise ScenarioError("table size and height must be positive")

    def corners(self, inset: float = 0.0) -> np.ndarray:
        hx, hy = self.size[0] / 2.0 - inset, self.size[1] / 2.0 - inset
        local = np.array([[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return self.center + local @ rot.T

    def outline(self) -> np.ndarray:
        c = self.corners()
        return np.stack([c, np.roll(c, -1, axis=0)], axis=1)

    def leg_centers(self) -> np.ndarray:
        return self.corners(inset=TABLE_LEG_INSET)

    def top_plane(self) -> PlaneParams:
        return make_plane([0.0, 0.0, 1.0], -self.height)

    def top_hull(self) -> np.ndarray:
        c = self.corners()
        return np.column_stack([c, np.full(len(c), self.height)])


@dataclass
class Door:
    """Hinged leaf across a doorway. swing 0 closes the doorway, 1 opens it
    fully (leaf rotated a quarter turn about the hinge)."""

    id: str
    hinge: np.ndarray
    latch: np.ndarray
    swing: float = 0.0
    spring: bool = False
    opens_ccw: bool = True
    height: float = WALL_HEIGHT
    target: Optional[float] = None

    def __post_init__(self) -> None:
        self.hinge = np.asarray(self.hinge, dtype=float).reshape(2)
        self.latch = np.asarray(self.latch, dtype=float).reshape(2)
        if not self.id:
            raise ScenarioError("door id must be non-empty")
        if np.linalg.norm(self.latch - self.hinge) < 1e-9:
            raise ScenarioError(f"door {self.id} has zero width")
        if not 0.0 <= self.swing <= 1.0:
            raise ScenarioError(f"door {self.id} swing {self.swing} outside [0, 1]")

    def width(self) -> float:
        return float(np.linalg.norm(self.latch - self.hinge))

    def segment(self) -> np.ndarray:
        """The doorway itself, independent of the leaf position."""
        return np.array([self.hinge, self.latch])

    def leaf(self) -> np.ndarray:
        angle = self.swing * (math.pi / 2.0) * (1.0 if self.opens_ccw else -1.0)
        c, s = math.cos(angle), math.sin(angle)
        e = self.latch - self.hinge
        tip = self.hinge + np.array([c * e[0] - s * e[1], s * e[0] + c * e[1]])
        return np.array([self.hinge, tip])


@dataclass
class Sign:
    text: str
    position: np.ndarray
    door: Optional[str] = None

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        if not self.text:
            raise ScenarioError("sign text must be non-empty")


@dataclass
class GestureCommand:
    """Ask a simulated human to point at a map-frame target."""

    target: np.ndarray
    method: str = "elbow_hand"
    scope: str = "target2"
    duration: float = 1.5

    def __post_init__(self) -> None:
        self.target = np.asarray(self.target, dtype=float).reshape(3)
        if self.duration <= 0.0:
            raise ScenarioError("gesture duration must be positive")


@dataclass
class ArmState:
    """A gesture in progress: joints are solved once when the arm is raised
    and stay frozen in the map frame while the gesture is held."""

    command: GestureCommand
    head: np.ndarray
    elbow: np.ndarray
    hand: np.ndarray
    theta_err: float      # sampled measured-angle offsets, radians
    psi_err: float
    held: float = 0.0


@dataclass
class SimHuman:
    id: str
    pose: Pose2
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    mode: str = MODE_WAYPOINTS
    waypoints: list = field(default_factory=list)
    waypoint_index: int = 0
    loop: bool = False
    desired_speed: float = 1.3
    radius: float = HUMAN_RADIUS
    height: float = HUMAN_HEIGHT
    arm: Optional[ArmState] = None

    def __post_init__(self) -> None:
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(2)
        self.waypoints = [np.asarray(w, dtype=float).reshape(2) for w in self.waypoints]
        if not self.id:
            raise ScenarioError("human id must be non-empty")
        if self.mode not in HUMAN_MODES:
            raise ScenarioError(f"human {self.id}: unknown mode {self.mode!r}")
        if not 0.0 < self.desired_speed <= HUMAN_MAX_SPEED:
            raise ScenarioError(
                f"human {self.id}: desired speed must lie in (0, {HUMAN_MAX_SPEED}]"
            )

    def goal(self) -> Optional[np.ndarray]:
        if self.waypoint_index < len(self.waypoints):
            return self.waypoints[self.waypoint_index]
        return None

    def leg_centers(self) -> np.ndarray:
        c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
        lateral = np.array([-s, c]) * (LEG_SPACING / 2.0)
        p = self.pose.translation()
        return np.array([p + lateral, p - lateral])


@dataclass
class RobotState:
    pose: Pose2
    v: float = 0.0
    omega: float = 0.0


@dataclass
class WorldModel:
    walls: list = field(default_factory=list)
    tables: list = field(default_factory=list)
    doors: list = field(default_factory=list)
    signs: list = field(default_factory=list)
    humans: list = field(default_factory=list)
    robot: RobotState = field(default_factory=lambda: RobotState(Pose2()))
    time: float = 0.0
    tick: int = 0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        seen = set()
        for door in self.doors:
            if door.id in seen:
                raise ScenarioError(f"duplicate door id {door.id!r}")
            seen.add(door.id)
        seen = set()
        for human in self.humans:
            if human.id in seen:
                raise ScenarioError(f"duplicate human id {human.id!r}")
            seen.add(human.id)
        door_ids = {d.id for d in self.doors}
        for sign in self.signs:
            if sign.door is not None and sign.door not in door_ids:
                raise ScenarioError(f"sign {sign.text!r} references unknown door {sign.door!r}")
        walls = self.walls
        for i in range(len(walls)):
            for j in range(i + 1, len(walls)):
                if _segments_cross(walls[i].a, walls[i].b, walls[j].a, walls[j].b):
                    raise ScenarioError(f"walls {i} and {j} cross each other")

    def door(self, door_id: str) -> Door:
        for d in self.doors:
            if d.id == door_id:
                return d
        raise KeyError(f"no door {door_id!r}")

    def human(self, human_id: str) -> SimHuman:
        for h in self.humans:
            if h.id == human_id:
                return h
        raise KeyError(f"no human {human_id!r}")

    def wall_segments(self) -> np.ndarray:
        if not self.walls:
            return np.zeros((0, 2, 2))
        return np.stack([w.segment() for w in self.walls])

    def door_leaves(self) -> np.ndarray:
        if not self.doors:
            return np.zeros((0, 2, 2))
        return np.stack([d.leaf() for d in self.doors])

    def obstacle_segments(self) -> np.ndarray:
        """Everything a walking human must not cross: walls, door leaves,
        table outlines."""
        parts = [self.wall_segments(), self.door_leaves()]
        parts += [t.outline() for t in self.tables]
        parts = [p for p in parts if len(p)]
        if not parts:
            return np.zeros((0, 2, 2))
        return np.concatenate(parts, axis=0)

    def plane_entities(self) -> list[tuple[int, PlaneParams, np.ndarray]]:
        """Mappable planar surfaces as (true id, map-frame plane, hull)."""
        out = []
        for i, wall in enumerate(self.walls):
            out.append((i, wall.plane(), wall.hull()))
        for j, table in enumerate(self.tables):
            out.append((len(self.walls) + j, table.top_plane(), table.top_hull()))
        return out

    def snapshot(self) -> "WorldModel":
        return copy.deepcopy(self)


def _segments_cross(a1, a2, b1, b2) -> bool:
    """Proper crossing only: interiors intersect. Shared endpoints and
    T-junctions are legitimate floor-plan features."""

    def orient(p, q, r):
        val = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        if abs(val) < 1e-12:
            return 0
        return 1 if val > 0 else -1

    o1, o2 = orient(a1, a2, b1), orient(a1, a2, b2)
    o3, o4 = orient(b1, b2, a1), orient(b1, b2, a2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


@dataclass
class Event:
    """A scripted change applied once when simulated time reaches t."""

    t: float
    action: str
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    world: WorldModel
    events: list = field(default_factory=list)


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ScenarioError(f"{where}: missing required key {key!r}")
    return doc[key]


def world_from_dict(doc: dict) -> WorldModel:
    walls = [
        Wall(w["a"], w["b"], height=w.get("height", WALL_HEIGHT))
        for w in doc.get("walls", [])
    ]
    tables = [
        Table(
            t["center"],
            tuple(t["size"]),
            yaw=t.get("yaw", 0.0),
            height=t.get("height", TABLE_HEIGHT),
        )
        for t in doc.get("tables", [])
    ]
    doors = [
        Door(
            _require(d, "id", "door"),
            _require(d, "hinge", "door"),
            _require(d, "latch", "door"),
            swing=d.get("swing", 0.0),
            spring=d.get("spring", False),
            opens_ccw=d.get("opens_ccw", True),
        )
        for d in doc.get("doors", [])
    ]
    signs = [
        Sign(_require(s, "text", "sign"), _require(s, "position", "sign"), door=s.get("door"))
        for s in doc.get("signs", [])
    ]
    humans = [
        SimHuman(
            _require(h, "id", "human"),
            Pose2(*h.get("pose", (0.0, 0.0, 0.0))),
            mode=h.get("mode", MODE_WAYPOINTS),
            waypoints=h.get("waypoints", []),
            loop=h.get("loop", False),
            desired_speed=h.get("desired_speed", 1.3),
        )
        for h in doc.get("humans", [])
    ]
    robot_doc = doc.get("robot", {})
    robot = RobotState(Pose2(*robot_doc.get("pose", (0.0, 0.0, 0.0))))
    return WorldModel(
        walls=walls, tables=tables, doors=doors, signs=signs, humans=humans, robot=robot
    )


def scenario_from_dict(doc: dict) -> Scenario:
    if doc.get("version", 1) != 1:
        raise ScenarioError(f"unsupported scenario version {doc.get('version')!r}")
    world = world_from_dict(doc)
    events = []
    for i, e in enumerate(doc.get("events", [])):
        t = _require(e, "t", f"event {i}")
        action = _require(e, "action", f"event {i}")
        params = {k: v for k, v in e.items() if k not in ("t", "action")}
        events.append(Event(float(t), str(action), params))
    events.sort(key=lambda e: e.t)
    return Scenario(name=doc.get("name", "unnamed"), world=world, events=events)


def load_scenario(source: Union[str, Path, dict]) -> Scenario:
    if isinstance(source, dict):
        return scenario_from_dict(source)
    path = Path(source)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path}: not valid JSON ({err})") from err
    return scenario_from_dict(doc)


def scenario_to_dict(scenario: Scenario) -> dict:
    w = scenario.world
    return {
        "version": 1,
        "name": scenario.name,
        "walls": [
            {"a": wall.a.tolist(), "b": wall.b.tolist(), "height": wall.height}
            for wall in w.walls
        ],
        "tables": [
            {
                "center": t.center.tolist(),
                "size": list(t.size),
                "yaw": t.yaw,
                "height": t.height,
            }
            for t in w.tables
        ],
        "doors": [
            {
                "id": d.id,
                "hinge": d.hinge.tolist(),
                "latch": d.latch.tolist(),
                "swing": d.swing,
                "spring": d.spring,
                "opens_ccw": d.opens_ccw,
            }
            for d in w.doors
        ],
        "signs": [
            {"text": s.text, "position": s.position.tolist(), "door": s.door}
            for s in w.signs
        ],
        "humans": [
            {
                "id": h.id,
                "pose": [h.pose.x, h.pose.y, h.pose.theta],
                "mode": h.mode,
                "waypoints": [wp.tolist() for wp in h.waypoints],
                "loop": h.loop,
                "desired_speed": h.desired_speed,
            }
            for h in w.humans
        ],
        "robot": {"pose": [w.robot.pose.x, w.robot.pose.y, w.robot.pose.theta]},
        "events": [
            {"t": e.t, "action": e.action, **e.params} for e in scenario.events
        ],
    }
