"""Simulated sensing: laser scans, plane patches, door signs, skeletons.

Every sensor is a pure function of a world snapshot plus an optional RNG;
passing no RNG yields noiseless ground truth. Laser noise is truncated at
four sigma so a reported range never overshoots the true surface by more.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..geometry import PlaneParams, Pose2, canonicalize_plane, rotation_about_axis, transform_plane
from ..scan import MAX_RANGE, NO_RETURN, LaserScan
from ..skeleton import SkeletonFrame
from ..slam.factors import PlaneMeasurement, SignMeasurement
from .model import LEG_RADIUS, TABLE_LEG_RADIUS, WorldModel

LASER_ANGLE_MIN = -2.0 * math.pi / 3.0
LASER_ANGLE_MAX = 2.0 * math.pi / 3.0
LASER_INCREMENT = math.radians(0.25)
LASER_SIGMA = 0.01

SCAN_PLANE = {"ankle": 0.2, "torso": 0.7}
TORSO_SEMI_AXES = (0.14, 0.08)   # half width across shoulders, half depth

PLANE_MAX_RANGE = 4.0
PLANE_HALF_FOV = math.radians(57.0)
PLANE_NORMAL_SIGMA = math.radians(0.5)
PLANE_D_SIGMA = 0.02
SIGN_POS_SIGMA = 0.02

_NEAR = 1e-6


def _ray_segments(origin: np.ndarray, dirs: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """Per-beam distance to the nearest of the segments (inf where none).

    dirs need not be unit; distances come back in units of each dir's length.
    """
    if len(segs) == 0:
        return np.full(len(dirs), np.inf)
    a = segs[:, 0]
    e = segs[:, 1] - segs[:, 0]
    r = a - origin                                   # (n, 2)
    det = np.outer(e[:, 0], dirs[:, 1]) - np.outer(e[:, 1], dirs[:, 0])   # (n, m)
    t_num = (e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0])[:, None]              # (n, 1)
    u_num = dirs[None, :, 0] * r[:, None, 1] - dirs[None, :, 1] * r[:, None, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num / det
        u = u_num / det
    ok = (np.abs(det) > 1e-12) & (t >= _NEAR) & (u >= -1e-12) & (u <= 1.0 + 1e-12)
    t = np.where(ok, t, np.inf)
    return t.min(axis=0)


def _ray_discs(origin: np.ndarray, dirs: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Per-beam distance to the nearest disc edge (dirs must be unit)."""
    if len(centers) == 0:
        return np.full(len(dirs), np.inf)
    oc = centers - origin                            # (k, 2)
    m = dirs @ oc.T                                  # (beams, k)
    q = np.einsum("ij,ij->i", oc, oc) - radii**2     # (k,)
    disc = m * m - q[None, :]
    with np.errstate(invalid="ignore"):
        root = np.sqrt(disc)
    t_near = m - root
    t_far = m + root
    t = np.where(t_near >= _NEAR, t_near, np.where(t_far >= _NEAR, t_far, np.inf))
    t = np.where(disc >= 0.0, t, np.inf)
    return t.min(axis=1)


def _ray_ellipses(origin: np.ndarray, dirs: np.ndarray, ellipses) -> np.ndarray:
    """ellipses: iterable of (center (2,), yaw, semi_x, semi_y)."""
    best = np.full(len(dirs), np.inf)
    for center, yaw, sa, sb in ellipses:
        c, s = math.cos(yaw), math.sin(yaw)
        rot_t = np.array([[c, s], [-s, c]])
        scale = np.array([1.0 / sa, 1.0 / sb])
        o = (rot_t @ (origin - center)) * scale
        d = (dirs @ rot_t.T) * scale
        a = np.einsum("ij,ij->i", d, d)
        b = d @ o
        c0 = float(o @ o) - 1.0
        disc = b * b - a * c0
        with np.errstate(invalid="ignore"):
            root = np.sqrt(disc)
        t_near = (-b - root) / a
        t_far = (-b + root) / a
        t = np.where(t_near >= _NEAR, t_near, np.where(t_far >= _NEAR, t_far, np.inf))
        t = np.where(disc >= 0.0, t, np.inf)
        best = np.minimum(best, t)
    return best


def simulate_laser(
    world: WorldModel,
    origin: Pose2,
    height: str = "ankle",
    *,
    rng: Optional[np.random.Generator] = None,
    angle_min: float = LASER_ANGLE_MIN,
    angle_max: float = LASER_ANGLE_MAX,
    increment: float = LASER_INCREMENT,
    max_range: float = MAX_RANGE,
    noise_sigma: float = LASER_SIGMA,
) -> LaserScan:
    """Cast one scan from a sensor pose at the given height class.

    Ankle beams see walls, door leaves, table legs and human legs; torso
    beams see walls, door leaves, tall table outlines and torso ellipses.
    """
    if height not in SCAN_PLANE:
        raise ValueError(f"unknown scan height {height!r}")
    n_beams = int(round((angle_max - angle_min) / increment)) + 1
    angles = origin.theta + angle_min + increment * np.arange(n_beams)
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    o = origin.translation()

    seg_parts = [world.wall_segments(), world.door_leaves()]
    discs_c: list[np.ndarray] = []
    discs_r: list[float] = []
    ellipses = []
    if height == "ankle":
        for table in world.tables:
            for leg in table.leg_centers():
                discs_c.append(leg)
                discs_r.append(TABLE_LEG_RADIUS)
        for human in world.humans:
            for leg in human.leg_centers():
                discs_c.append(leg)
                discs_r.append(LEG_RADIUS)
    else:
        plane_z = SCAN_PLANE[height]
        seg_parts += [t.outline() for t in world.tables if t.height >= plane_z]
        for human in world.humans:
            # body x is the facing direction, so depth goes first
            ellipses.append(
                (
                    human.pose.translation(),
                    human.pose.theta,
                    TORSO_SEMI_AXES[1],
                    TORSO_SEMI_AXES[0],
                )
            )

    seg_parts = [p for p in seg_parts if len(p)]
    segs = np.concatenate(seg_parts, axis=0) if seg_parts else np.zeros((0, 2, 2))

    true_r = _ray_segments(o, dirs, segs)
    if discs_c:
        true_r = np.minimum(true_r, _ray_discs(o, dirs, np.array(discs_c), np.array(discs_r)))
    if ellipses:
        true_r = np.minimum(true_r, _ray_ellipses(o, dirs, ellipses))
    true_r = np.where(true_r <= max_range, true_r, np.inf)

    ranges = true_r.copy()
    hit = np.isfinite(true_r)
    if rng is not None and noise_sigma > 0.0:
        noise = rng.normal(0.0, noise_sigma, size=hit.sum())
        noise = np.clip(noise, -4.0 * noise_sigma, 4.0 * noise_sigma)
        ranges[hit] = np.maximum(true_r[hit] + noise, 1e-3)
    ranges[~hit] = NO_RETURN
    return LaserScan(
        origin=origin,
        angle_min=angle_min,
        angle_increment=increment,
        ranges=ranges,
        height=height,
        stamp=world.time,
    )


def _sight_blocked(world: WorldModel, origin: np.ndarray, target: np.ndarray, skip_wall: Optional[int] = None) -> bool:
    """True when a wall or door leaf crosses the open segment origin-target."""
    segs = []
    for i, wall in enumerate(world.walls):
        if i == skip_wall:
            continue
        segs.append(wall.segment())
    for door in world.doors:
        segs.append(door.leaf())
    if not segs:
        return False
    d = (np.asarray(target, dtype=float) - origin)[None, :]
    t = _ray_segments(np.asarray(origin, dtype=float), d, np.stack(segs))
    return bool(t[0] < 1.0 - 1e-3)


def _frustum_halfplanes(max_range: float, half_fov: float) -> list[tuple[np.ndarray, float]]:
    """Half-planes (normal, offset) with inside = normal . p + offset >= 0,
    in the sensor frame: two FOV edges, a near plane and a far plane."""
    tf = math.tan(half_fov)
    return [
        (np.array([tf, -1.0]), 0.0),
        (np.array([tf, 1.0]), 0.0),
        (np.array([1.0, 0.0]), -1e-3),
        (np.array([-1.0, 0.0]), max_range),
    ]


def _clip_segment(a: np.ndarray, b: np.ndarray, planes) -> Optional[tuple[np.ndarray, np.ndarray]]:
    t0, t1 = 0.0, 1.0
    e = b - a
    for n, off in planes:
        fa = float(n @ a) + off
        fe = float(n @ e)
        if abs(fe) < 1e-12:
            if fa < 0.0:
                return None
            continue
        t_cross = -fa / fe
        if fe > 0.0:
            t0 = max(t0, t_cross)
        else:
            t1 = min(t1, t_cross)
        if t0 > t1:
            return None
    return a + t0 * e, a + t1 * e


def _clip_polygon(verts: np.ndarray, planes) -> Optional[np.ndarray]:
    poly = [v for v in verts]
    for n, off in planes:
        if not poly:
            return None
        out = []
        for i, cur in enumerate(poly):
            nxt = poly[(i + 1) % len(poly)]
            f_cur = float(n @ cur) + off
            f_nxt = float(n @ nxt) + off
            if f_cur >= 0.0:
                out.append(cur)
            if (f_cur >= 0.0) != (f_nxt >= 0.0):
                t = f_cur / (f_cur - f_nxt)
                out.append(cur + t * (nxt - cur))
        poly = out
    if len(poly) < 3:
        return None
    return np.array(poly)


def observe_planes(
    world: WorldModel,
    pose: Pose2,
    *,
    rng: Optional[np.random.Generator] = None,
    max_range: float = PLANE_MAX_RANGE,
    half_fov: float = PLANE_HALF_FOV,
    normal_sigma: float = PLANE_NORMAL_SIGMA,
    d_sigma: float = PLANE_D_SIGMA,
) -> list[PlaneMeasurement]:
    """Planar patches visible from a pose: nearby, inside the horizontal FOV,
    with an unoccluded center. Hulls are clipped to the view frustum and
    reported in the sensor frame along with the true entity id."""
    planes = _frustum_halfplanes(max_range, half_fov)
    noise = np.diag(
        [normal_sigma**2 / 3.0] * 3 + [d_sigma**2]
    )
    out: list[PlaneMeasurement] = []
    n_walls = len(world.walls)
    for true_id, map_plane, hull in world.plane_entities():
        # clip to the frustum first: the range and fov gates apply to the
        # visible patch, not the whole entity (a long wall right beside the
        # sensor has a faraway midpoint but is plainly visible)
        if true_id < n_walls:
            a = pose.to_local(hull[0, :2])
            b = pose.to_local(hull[1, :2])
            clipped = _clip_segment(a, b, planes)
            if clipped is None:
                continue
            height = hull[2, 2]
            pa, pb = clipped
            local_hull = np.array(
                [
                    [pa[0], pa[1], 0.0],
                    [pb[0], pb[1], 0.0],
                    [pb[0], pb[1], height],
                    [pa[0], pa[1], height],
                ]
            )
            center_local = 0.5 * (np.asarray(pa) + np.asarray(pb))
        else:
            verts2 = np.array([pose.to_local(v[:2]) for v in hull])
            clipped2 = _clip_polygon(verts2, planes)
            if clipped2 is None:
                continue
            z = hull[0, 2]
            local_hull = np.column_stack([clipped2, np.full(len(clipped2), z)])
            center_local = clipped2.mean(axis=0)

        skip = true_id if true_id < n_walls else None
        center_map = pose.to_map(center_local)
        if _sight_blocked(world, pose.translation(), center_map, skip_wall=skip):
            continue

        local_plane = transform_plane(pose, map_plane)
        if rng is not None:
            axis = rng.normal(size=3)
            while np.linalg.norm(axis) < 1e-9:
                axis = rng.normal(size=3)
            angle = rng.normal(0.0, normal_sigma)
            n_noisy = rotation_about_axis(axis, angle) @ local_plane.n
            d_noisy = local_plane.d + rng.normal(0.0, d_sigma)
            local_plane = canonicalize_plane(PlaneParams(n_noisy, d_noisy))
        out.append(
            PlaneMeasurement(
                params=local_plane,
                hull=local_hull,
                noise=noise.copy(),
                stamp=world.time,
                true_id=true_id,
            )
        )
    return out


def observe_signs(
    world: WorldModel,
    pose: Pose2,
    *,
    rng: Optional[np.random.Generator] = None,
    max_range: float = PLANE_MAX_RANGE,
    half_fov: float = PLANE_HALF_FOV,
    pos_sigma: float = SIGN_POS_SIGMA,
) -> list[SignMeasurement]:
    """Door signs read from a pose, positions in the sensor frame."""
    out: list[SignMeasurement] = []
    noise = np.eye(3) * pos_sigma**2
    for sign in world.signs:
        local = pose.to_local3(sign.position)
        if np.hypot(local[0], local[1]) > max_range:
            continue
        if abs(math.atan2(local[1], local[0])) > half_fov:
            continue
        if _sight_blocked(world, pose.translation(), sign.position[:2]):
            continue
        if rng is not None:
            local = local + rng.normal(0.0, pos_sigma, size=3)
        segment = None
        if sign.door is not None:
            # reported in the sensor frame like the position itself
            segment = pose.to_local(world.door(sign.door).segment())
        out.append(
            SignMeasurement(
                position=local,
                text=sign.text,
                noise=noise.copy(),
                stamp=world.time,
                door_segment=segment,
            )
        )
    return out


def observe_skeletons(
    world: WorldModel,
    pose: Pose2,
    *,
    max_range: float = PLANE_MAX_RANGE,
) -> list[SkeletonFrame]:
    """Skeleton frames for humans holding a gesture, joints in sensor frame.

    Deterministic: the arm posture was frozen when the gesture was armed.
    """
    out: list[SkeletonFrame] = []
    for human in world.humans:
        arm = human.arm
        if arm is None:
            continue
        rel = pose.to_local(human.pose.translation())
        if np.hypot(*rel) > max_range:
            continue
        out.append(
            SkeletonFrame(
                head=pose.to_local3(arm.head),
                elbow=pose.to_local3(arm.elbow),
                hand=pose.to_local3(arm.hand),
                held=arm.held,
                stamp=world.time,
            )
        )
    return out
