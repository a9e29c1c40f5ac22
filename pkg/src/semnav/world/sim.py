"""World stepping, scripted events and seeded sensor streams.

step() advances every entity by one tick: humans by their mode, the robot
by unicycle kinematics, door leaves by their swing dynamics. Identical
seeds and command streams reproduce trajectories bitwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..geometry import Pose2, minimal_rotation, wrap_angle
from ..pointing.stats import AngleStats, load_stats
from ..scan import LaserScan
from .model import (
    DOOR_HOLD_RADIUS,
    DOOR_RATE,
    HUMAN_MAX_SPEED,
    MODE_OPERATOR,
    MODE_SFM,
    MODE_WAYPOINTS,
    ArmState,
    GestureCommand,
    Scenario,
    SimHuman,
    WorldModel,
)
from .sensors import observe_planes, observe_signs, observe_skeletons, simulate_laser
from .social import social_force_step

MAX_DT = 0.1
WAYPOINT_TOLERANCE = 0.05

HEAD_HEIGHT = 1.70
SHOULDER_HEIGHT = 1.45
SHOULDER_LATERAL = 0.18   # right shoulder sits this far off the body axis
UPPER_ARM = 0.28
FOREARM = 0.35


@dataclass(frozen=True)
class GestureNoise:
    """Per-gesture spread of the measured pointing angles, expressed in
    units of the angle statistics' sigmas. Horizontal errors are tight;
    vertical errors dominate, offset about one sigma above the mean."""

    theta_sigma: float = 0.10
    psi_center: float = 1.20
    psi_sigma: float = 0.12

    def sample(self, rng: np.random.Generator, stats: AngleStats) -> tuple[float, float]:
        """Returns measured-angle offsets (theta, psi) in radians."""
        theta = stats.mu_theta + self.theta_sigma * stats.sigma_theta * rng.standard_normal()
        psi = stats.mu_psi + (self.psi_center + self.psi_sigma * rng.standard_normal()) * stats.sigma_psi
        return math.radians(theta), math.radians(psi)


@dataclass
class Commands:
    """Operator inputs for one tick. Omitted entries leave state unchanged."""

    robot: Optional[tuple[float, float]] = None        # (v, omega)
    humans: dict = field(default_factory=dict)         # id -> (vx, vy)
    doors: dict = field(default_factory=dict)          # id -> target swing
    gestures: dict = field(default_factory=dict)       # id -> GestureCommand | None


_Z = np.array([0.0, 0.0, 1.0])


def _ray_for_seen_direction(e_t, w):
    """Closed form: unit v whose no-twist frame shows w at e_t, i.e.
    minimal_rotation(z, v) @ e_t == w for unit vectors e_t, w.

    A minimal rotation away from z is exactly a rotation about a horizontal
    axis a. The axis is preserved, so a . e_t = a . w, which pins a as the
    horizontal direction perpendicular to e_t - w; the angle then follows
    from the components perpendicular to a, and v is the rotated z.
    """
    q = e_t - w
    if q[0] * q[0] + q[1] * q[1] > 1e-24:
        a = np.array([q[1], -q[0], 0.0])
    else:
        # degenerate family: any horizontal axis works, pick one from w
        a = np.array([w[1], -w[0], 0.0])
        if np.linalg.norm(a) < 1e-12:
            a = np.array([1.0, 0.0, 0.0])
    a = a / np.linalg.norm(a)
    e_p = e_t - (a @ e_t) * a
    w_p = w - (a @ w) * a
    gamma = math.atan2(float(a @ np.cross(e_p, w_p)), float(e_p @ w_p))
    return math.cos(gamma) * _Z + math.sin(gamma) * np.cross(a, _Z)


def _solve_pointing_direction(g, ell, e_t, v0):
    """Unit ray direction v with g = ell*v + s * R(v) @ e_t for some s > 0,
    where R(v) is the minimal rotation carrying z onto v.

    The ray starts at a fixed joint, the hand sits ell along it (ell = 0
    when the hand itself is the fixed joint), and the target at offset g
    from the joint must appear at the offsets encoded in e_t when expressed
    in the ray frame at the hand. s is fixed by the triangle identity
    |g|^2 = (ell + s cos a)^2 + (s sin a)^2 with a = angle(z, e_t).
    """
    g = np.asarray(g, dtype=float)
    big_g = float(np.linalg.norm(g))
    cos_a = float(e_t[2])
    disc = big_g * big_g - ell * ell * (1.0 - cos_a * cos_a)
    if big_g < 1e-9 or disc <= 0.0:
        raise ValueError("gesture target too close to the pointing joint")
    s = -ell * cos_a + math.sqrt(disc)
    if s <= 0.0:
        raise ValueError("gesture target behind the pointing joint")

    if ell == 0.0:
        return _ray_for_seen_direction(e_t, g / big_g)

    def residual(v):
        w = g - ell * v
        w = w / np.linalg.norm(w)
        return float(np.linalg.norm(minimal_rotation(_Z, v) @ e_t - w))

    # alternate exact solves of one variable given the other; the v update
    # contracts when the hand-to-target leg dominates (s > ell), the w
    # update in the opposite regime
    v = np.asarray(v0, dtype=float)
    v = v / np.linalg.norm(v)
    on_v = s >= ell
    for _ in range(400):
        if on_v:
            w = g - ell * v
            w = w / np.linalg.norm(w)
            v_new = _ray_for_seen_direction(e_t, w)
        else:
            w = minimal_rotation(_Z, v) @ e_t
            v_new = g - s * w
            v_new = v_new / np.linalg.norm(v_new)
        if float(np.linalg.norm(v_new - v)) < 1e-15:
            v = v_new
            break
        v = v_new
    if residual(v) < 1e-12 * max(1.0, big_g):
        return v

    from scipy.optimize import least_squares

    def packed(x):
        vv = x / np.linalg.norm(x)
        w = g - ell * vv
        w = w / np.linalg.norm(w)
        f = minimal_rotation(_Z, vv) @ e_t - w
        return np.append(f, np.linalg.norm(x) - 1.0)

    sol = least_squares(packed, v, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    v = sol.x / np.linalg.norm(sol.x)
    if residual(v) > 1e-9 * max(1.0, big_g):
        raise ValueError("pointing synthesis did not converge")
    return v


def synthesize_arm(
    human: SimHuman,
    command: GestureCommand,
    theta_err: float,
    psi_err: float,
    robot_pose: Pose2,
) -> ArmState:
    """Pose the arm so a camera at robot_pose measures exactly the given
    angular offsets between the pointing ray and the target direction.

    The hand lands on the ray from the shoulder toward the target; the elbow
    (or head-hand geometry) absorbs the angular error. Angles live in the
    camera frame because the minimal-rotation hand frame has no twist
    convention of its own, so joints are solved there and stored in the map.
    """
    target_s = robot_pose.to_local3(command.target)
    head_m = human.pose.to_map3(np.array([0.0, 0.0, HEAD_HEIGHT]))
    shoulder_m = human.pose.to_map3(np.array([0.0, -SHOULDER_LATERAL, SHOULDER_HEIGHT]))
    head_s = robot_pose.to_local3(head_m)
    shoulder_s = robot_pose.to_local3(shoulder_m)

    e_t = np.array([math.tan(theta_err), math.tan(psi_err), 1.0])
    e_t = e_t / np.linalg.norm(e_t)

    u = target_s - shoulder_s
    dist = float(np.linalg.norm(u))
    if dist < 1e-9:
        raise ValueError("gesture target coincides with the shoulder")
    u = u / dist
    reach = min(UPPER_ARM + FOREARM, 0.8 * dist)
    hand0 = shoulder_s + reach * u

    if command.method == "elbow_hand":
        hand_s = hand0
        v = _solve_pointing_direction(target_s - hand_s, 0.0, e_t, u)
        elbow_s = hand_s - FOREARM * v
    elif command.method == "head_hand":
        ell = float(np.linalg.norm(hand0 - head_s))
        v0 = (hand0 - head_s) / ell
        v = _solve_pointing_direction(target_s - head_s, ell, e_t, v0)
        hand_s = head_s + ell * v
        arm_dir = hand_s - shoulder_s
        arm_dir = arm_dir / np.linalg.norm(arm_dir)
        elbow_s = hand_s - FOREARM * arm_dir
    else:
        raise ValueError(f"unknown pointing method {command.method!r}")

    return ArmState(
        command=command,
        head=robot_pose.to_map3(head_s),
        elbow=robot_pose.to_map3(elbow_s),
        hand=robot_pose.to_map3(hand_s),
        theta_err=theta_err,
        psi_err=psi_err,
    )


def _advance_robot(world: WorldModel, dt: float) -> None:
    robot = world.robot
    pose = robot.pose
    v, w = robot.v, robot.omega
    if abs(w) < 1e-9:
        robot.pose = Pose2(
            pose.x + v * math.cos(pose.theta) * dt,
            pose.y + v * math.sin(pose.theta) * dt,
            pose.theta,
        )
        return
    theta_new = pose.theta + w * dt
    robot.pose = Pose2(
        pose.x + (v / w) * (math.sin(theta_new) - math.sin(pose.theta)),
        pose.y + (v / w) * (-math.cos(theta_new) + math.cos(pose.theta)),
        wrap_angle(theta_new),
    )


def _advance_waypoint_human(human: SimHuman, dt: float) -> None:
    goal = human.goal()
    if goal is None:
        human.velocity = np.zeros(2)
        return
    p = human.pose.translation()
    to_goal = goal - p
    dist = float(np.linalg.norm(to_goal))
    step_len = human.desired_speed * dt
    if dist <= max(step_len, WAYPOINT_TOLERANCE):
        new_p = goal
        human.waypoint_index += 1
        if human.loop and human.waypoint_index >= len(human.waypoints):
            human.waypoint_index = 0
        human.velocity = to_goal / dt if dist > 1e-12 else np.zeros(2)
    else:
        direction = to_goal / dist
        human.velocity = human.desired_speed * direction
        new_p = p + human.velocity * dt
    heading = human.pose.theta
    if np.linalg.norm(human.velocity) > 0.05:
        heading = math.atan2(human.velocity[1], human.velocity[0])
    human.pose = Pose2(new_p[0], new_p[1], heading)


def step(
    world: WorldModel,
    dt: float,
    commands: Optional[Commands] = None,
    *,
    rng: Optional[np.random.Generator] = None,
    stats: Optional[dict] = None,
    gesture_noise: GestureNoise = GestureNoise(),
) -> None:
    """Advance the world by dt (at most 0.1 s)."""
    if not 0.0 < dt <= MAX_DT:
        raise ValueError(f"dt must lie in (0, {MAX_DT}], got {dt}")
    cmd = commands or Commands()

    if cmd.robot is not None:
        world.robot.v, world.robot.omega = float(cmd.robot[0]), float(cmd.robot[1])

    for human_id, gesture in cmd.gestures.items():
        human = world.human(human_id)
        if gesture is None:
            human.arm = None
            continue
        if rng is None:
            raise ValueError("arming a gesture needs an rng")
        table = stats if stats is not None else load_stats()
        row = table[(gesture.method, gesture.scope)]
        theta_err, psi_err = gesture_noise.sample(rng, row)
        human.arm = synthesize_arm(human, gesture, theta_err, psi_err, world.robot.pose)

    for door_id, target in cmd.doors.items():
        world.door(door_id).target = float(np.clip(target, 0.0, 1.0))

    human_positions = [h.pose.translation() for h in world.humans]
    for door in world.doors:
        if door.target is not None:
            delta = np.clip(door.target - door.swing, -DOOR_RATE * dt, DOOR_RATE * dt)
            door.swing = float(np.clip(door.swing + delta, 0.0, 1.0))
            if abs(door.swing - door.target) < 1e-9:
                door.target = None
        elif door.spring and door.swing > 0.0:
            held = any(
                _point_segment_dist(p, door.hinge, door.latch) <= DOOR_HOLD_RADIUS
                for p in human_positions
            )
            if not held:
                door.swing = max(0.0, door.swing - DOOR_RATE * dt)

    obstacles = None
    others = {h.id: h.pose.translation() for h in world.humans}
    for human in world.humans:
        if human.id in cmd.humans:
            human.velocity = np.asarray(cmd.humans[human.id], dtype=float).reshape(2)
        if human.arm is not None:
            # pointing humans stand still; the frozen joints stay attached
            human.velocity = np.zeros(2)
            human.arm.held += dt
            if human.arm.held >= human.arm.command.duration:
                human.arm = None
            continue
        if human.mode == MODE_WAYPOINTS:
            _advance_waypoint_human(human, dt)
        elif human.mode == MODE_SFM:
            goal = human.goal()
            if goal is not None and np.linalg.norm(goal - human.pose.translation()) < 0.3:
                human.waypoint_index += 1
                if human.loop and human.waypoint_index >= len(human.waypoints):
                    human.waypoint_index = 0
                goal = human.goal()
            if obstacles is None:
                obstacles = world.obstacle_segments()
            neighbors = [p for hid, p in others.items() if hid != human.id]
            neighbors.append(world.robot.pose.translation())
            p_new, v_new = social_force_step(
                human.pose.translation(),
                human.velocity,
                goal,
                dt=dt,
                neighbors=np.array(neighbors),
                obstacles=obstacles,
                desired_speed=human.desired_speed,
                radius=human.radius,
            )
            heading = human.pose.theta
            if np.linalg.norm(v_new) > 0.05:
                heading = math.atan2(v_new[1], v_new[0])
            human.pose = Pose2(p_new[0], p_new[1], heading)
            human.velocity = v_new
        else:  # operator-driven
            speed = float(np.linalg.norm(human.velocity))
            if speed > HUMAN_MAX_SPEED:
                human.velocity = human.velocity * (HUMAN_MAX_SPEED / speed)
            p = human.pose.translation() + human.velocity * dt
            heading = human.pose.theta
            if speed > 0.05:
                heading = math.atan2(human.velocity[1], human.velocity[0])
            human.pose = Pose2(p[0], p[1], heading)

    _advance_robot(world, dt)
    world.time += dt
    world.tick += 1


def _point_segment_dist(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


_STREAMS = {"step": 0, "laser_ankle": 1, "laser_torso": 2, "planes": 3, "signs": 4}


class Simulator:
    """Owns a world, applies scripted events, and hands out sensor views
    with per-tick, per-sensor seeded noise."""

    def __init__(self, scenario: Scenario, seed: int = 0, dt: float = 0.05):
        self.world = scenario.world
        self.events = sorted(scenario.events, key=lambda e: e.t)
        self.seed = int(seed)
        self.dt = float(dt)
        self._next_event = 0
        self._stats = load_stats()

    def rng_for(self, stream: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.world.tick, _STREAMS[stream]])

    def _due_events(self) -> Commands:
        cmd = Commands()
        while (
            self._next_event < len(self.events)
            and self.events[self._next_event].t <= self.world.time + 1e-9
        ):
            e = self.events[self._next_event]
            self._next_event += 1
            if e.action == "set_door":
                cmd.doors[e.params["door"]] = float(e.params["swing"])
            elif e.action == "gesture":
                p = e.params
                cmd.gestures[p["human"]] = GestureCommand(
                    target=p["target"],
                    method=p.get("method", "elbow_hand"),
                    scope=p.get("scope", "target2"),
                    duration=p.get("duration", 1.5),
                )
            elif e.action == "end_gesture":
                cmd.gestures[e.params["human"]] = None
            elif e.action == "set_mode":
                self.world.human(e.params["human"]).mode = e.params["mode"]
            elif e.action == "set_waypoints":
                h = self.world.human(e.params["human"])
                h.waypoints = [np.asarray(w, dtype=float) for w in e.params["waypoints"]]
                h.waypoint_index = 0
            elif e.action == "set_robot":
                cmd.robot = (float(e.params["v"]), float(e.params["omega"]))
            else:
                raise ValueError(f"unknown scripted action {e.action!r}")
        return cmd

    def step(self, commands: Optional[Commands] = None) -> None:
        due = self._due_events()
        cmd = commands or Commands()
        merged = Commands(
            robot=cmd.robot if cmd.robot is not None else due.robot,
            humans={**due.humans, **cmd.humans},
            doors={**due.doors, **cmd.doors},
            gestures={**due.gestures, **cmd.gestures},
        )
        step(
            self.world,
            self.dt,
            merged,
            rng=self.rng_for("step"),
            stats=self._stats,
        )

    def laser(self, height: str = "ankle", mount: Pose2 = Pose2()) -> LaserScan:
        return simulate_laser(
            self.world,
            self.world.robot.pose.compose(mount),
            height,
            rng=self.rng_for(f"laser_{height}"),
        )

    def planes(self, mount: Pose2 = Pose2()):
        return observe_planes(
            self.world, self.world.robot.pose.compose(mount), rng=self.rng_for("planes")
        )

    def signs(self, mount: Pose2 = Pose2()):
        return observe_signs(
            self.world, self.world.robot.pose.compose(mount), rng=self.rng_for("signs")
        )

    def skeletons(self, mount: Pose2 = Pose2()):
        return observe_skeletons(self.world, self.world.robot.pose.compose(mount))
