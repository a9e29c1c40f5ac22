"""Planar poses, 3D planes, convex hulls and rays shared by the whole stack.

Robot poses are SE(2); planes stay fully 3D (embedded with z=0, roll=pitch=0).
All angles are radians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# Components smaller than this count as a tie when picking the canonical
# sign of a plane; it sits well above sensor noise on the normal so noisy
# re-observations of the same physical plane canonicalize the same way.
PLANE_TIE_EPS = 0.1


class DegenerateInput(ValueError):
    """Raised when geometry input collapses (collinear hull points etc.)."""


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]. In-range values pass through unchanged."""
    if -math.pi < theta <= math.pi:
        return theta
    return math.pi - (math.pi - theta) % TWO_PI


@dataclass(frozen=True)
class Pose2:
    """Planar rigid transform: rotation theta about z, translation (x, y)."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def rot2(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def rot3(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def translation3(self) -> np.ndarray:
        return np.array([self.x, self.y, 0.0])

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            wrap_angle(self.theta + other.theta),
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-(c * self.x + s * self.y), s * self.x - c * self.y, wrap_angle(-self.theta))

    def between(self, other: "Pose2") -> "Pose2":
        """Relative pose taking this frame onto ``other`` (self^-1 * other)."""
        return self.inverse().compose(other)

    def to_map(self, p_local: np.ndarray) -> np.ndarray:
        """Express a local 2D point in the map frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        p = np.asarray(p_local, dtype=float)
        return np.array([self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]])

    def to_local(self, p_map: np.ndarray) -> np.ndarray:
        """Express a map-frame 2D point in this pose's frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        dx = p_map[0] - self.x
        dy = p_map[1] - self.y
        return np.array([c * dx + s * dy, -s * dx + c * dy])

    def to_map3(self, p_local: np.ndarray) -> np.ndarray:
        q = self.to_map(p_local[:2])
        return np.array([q[0], q[1], p_local[2]])

    def to_local3(self, p_map: np.ndarray) -> np.ndarray:
        q = self.to_local(p_map[:2])
        return np.array([q[0], q[1], p_map[2]])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @staticmethod
    def from_array(v: np.ndarray) -> "Pose2":
        return Pose2(float(v[0]), float(v[1]), wrap_angle(float(v[2])))


@dataclass
class PlaneParams:
    """Infinite plane n . p + d = 0 with unit normal n = (a, b, c)."""

    n: np.ndarray
    d: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.n[0], self.n[1], self.n[2], self.d])

    def copy(self) -> "PlaneParams":
        return PlaneParams(self.n.copy(), self.d)

    def signed_distance(self, p: np.ndarray) -> float:
        return float(self.n @ np.asarray(p, dtype=float) + self.d)

    def is_vertical(self) -> bool:
        return abs(self.n[2]) < 0.1

    def is_horizontal(self) -> bool:
        return abs(self.n[2]) > 0.9


def canonicalize_plane(plane: PlaneParams) -> PlaneParams:
    """Pick the canonical sign of (n, d): the first decisively nonzero
    component among (n_z, n_x, n_y) is made positive.

    Idempotent. Components within PLANE_TIE_EPS of zero are treated as
    ties so measurement noise cannot flip a wall's normal.
    """
    n = np.asarray(plane.n, dtype=float)
    norm = float(np.linalg.norm(n))
    if norm < 1e-12:
        raise DegenerateInput("plane normal has zero length")
    n = n / norm
    d = plane.d / norm
    for comp in (n[2], n[0], n[1]):
        if comp > PLANE_TIE_EPS:
            return PlaneParams(n, d)
        if comp < -PLANE_TIE_EPS:
            return PlaneParams(-n, -d)
    # Unit normals always have a component above any tie epsilon < 1/sqrt(3);
    # fall back to raw sign of the largest magnitude component.
    k = int(np.argmax(np.abs(n)))
    return PlaneParams(n, d) if n[k] >= 0.0 else PlaneParams(-n, -d)


def make_plane(n, d: float) -> PlaneParams:
    """Build a canonical plane from a (not necessarily unit) normal."""
    return canonicalize_plane(PlaneParams(np.asarray(n, dtype=float), float(d)))


def transform_plane_raw(pose: Pose2, plane: PlaneParams) -> PlaneParams:
    """Express a map-frame plane in the robot frame, keeping the input sign.

    n' = R^T n, d' = <n, t> + d. Used by SLAM factors, which manage plane
    sign relative to their measurement themselves.
    """
    n = np.asarray(plane.n, dtype=float)
    n_r = pose.rot3().T @ n
    d_r = float(n @ pose.translation3()) + plane.d
    return PlaneParams(n_r, d_r)


def transform_plane(pose: Pose2, plane: PlaneParams) -> PlaneParams:
    """Express a map-frame plane in the robot frame, re-canonicalized."""
    return canonicalize_plane(transform_plane_raw(pose, plane))


def plane_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic in-plane orthonormal basis (u, v) with (u, v, n) right-handed."""
    n = np.asarray(n, dtype=float)
    seed = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(seed, n)
    u = u / np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v


@dataclass
class Polygon3:
    """Convex planar polygon, vertices ordered counter-clockwise about the normal."""

    vertices: np.ndarray  # (k, 3)

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)

    def normal(self) -> np.ndarray:
        # Newell's method, robust for any vertex count >= 3.
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        n = np.array(
            [
                np.sum((v[:, 1] - nxt[:, 1]) * (v[:, 2] + nxt[:, 2])),
                np.sum((v[:, 2] - nxt[:, 2]) * (v[:, 0] + nxt[:, 0])),
                np.sum((v[:, 0] - nxt[:, 0]) * (v[:, 1] + nxt[:, 1])),
            ]
        )
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise DegenerateInput("polygon is degenerate, no well-defined normal")
        return n / norm

    def plane(self) -> PlaneParams:
        n = self.normal()
        return canonicalize_plane(PlaneParams(n, -float(n @ self.centroid())))

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def area(self) -> float:
        v = self.vertices
        if len(v) < 3:
            return 0.0
        cross = np.cross(v[:-1] - v[0], v[1:] - v[0])
        return 0.5 * float(np.linalg.norm(cross.sum(axis=0)))

    def floor_vertices(self) -> np.ndarray:
        """Vertices dropped onto the floor plane (z discarded)."""
        return self.vertices[:, :2].copy()


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull of 2D points, counter-clockwise, no
    collinear interior vertices. Raises DegenerateInput when all points
    are collinear."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) >= 2:
        # Merge near-duplicates: a vanishing edge makes every turn look
        # collinear and pops true corners off the chain.
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        pts = pts[order]
        tol = 1e-9
        kept: list[np.ndarray] = []
        for p in pts:
            dup = False
            for q in reversed(kept):
                if p[0] - q[0] > tol:
                    break
                if abs(p[1] - q[1]) <= tol and abs(p[0] - q[0]) <= tol:
                    dup = True
                    break
            if not dup:
                kept.append(p)
        pts = np.array(kept)
    if len(pts) < 3:
        raise DegenerateInput("need at least 3 distinct points")

    def build(seq):
        chain: list[np.ndarray] = []
        for p in seq:
            while len(chain) >= 2:
                a, b = chain[-2], chain[-1]
                if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) <= 1e-12:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = build(pts)
    upper = build(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateInput("points are collinear")
    return np.array(hull)


def project_to_plane(points: np.ndarray, plane: PlaneParams) -> np.ndarray:
    """Orthogonal projection of 3D points onto the plane along its normal."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    dist = pts @ plane.n + plane.d
    return pts - np.outer(dist, plane.n)


def plane_coords(points: np.ndarray, plane: PlaneParams) -> np.ndarray:
    """2D coordinates of (projected) points in the plane's (u, v) basis."""
    u, v = plane_basis(plane.n)
    origin = -plane.d * plane.n
    rel = project_to_plane(points, plane) - origin
    return np.column_stack([rel @ u, rel @ v])


def plane_uncoords(coords: np.ndarray, plane: PlaneParams) -> np.ndarray:
    """Inverse of plane_coords: lift 2D in-plane coordinates back to 3D."""
    u, v = plane_basis(plane.n)
    origin = -plane.d * plane.n
    c = np.asarray(coords, dtype=float).reshape(-1, 2)
    return origin + np.outer(c[:, 0], u) + np.outer(c[:, 1], v)


def convex_hull_planar(points: np.ndarray, plane: PlaneParams) -> Polygon3:
    """Project points onto the plane, hull them in-plane, lift back to 3D.

    The result is counter-clockwise about the plane normal.
    """
    coords = plane_coords(points, plane)
    hull2 = convex_hull_2d(coords)
    return Polygon3(plane_uncoords(hull2, plane))


def ray_hit(origin: np.ndarray, direction: np.ndarray, polygon: Polygon3):
    """Nearest intersection of a ray with a convex planar polygon.

    Returns the 3D hit point, or None when the ray is parallel to the
    plane, points away from it, or misses the polygon. Boundary hits count.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    n = polygon.normal()
    d = -float(n @ polygon.vertices[0])
    denom = float(n @ direction)
    if abs(denom) < 1e-12:
        return None
    t = -(float(n @ origin) + d) / denom
    if t < 0.0:
        return None
    p = origin + t * direction
    verts = polygon.vertices
    edges = np.roll(verts, -1, axis=0) - verts
    rel = p - verts
    sides = np.cross(edges, rel) @ n
    if np.all(sides >= -1e-9):
        return p
    if np.all(sides <= 1e-9):  # clockwise-wound polygon, accept mirrored test
        return p
    return None


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis and an angle."""
    a = np.asarray(axis, dtype=float)
    norm = float(np.linalg.norm(a))
    if norm < 1e-12:
        raise DegenerateInput("rotation axis has zero length")
    a = a / norm
    k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def minimal_rotation(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Rotation matrix carrying unit vector src onto unit vector dst about
    the axis src x dst (no twist about dst). Antiparallel inputs rotate
    pi about a deterministic perpendicular axis."""
    a = np.asarray(src, dtype=float)
    b = np.asarray(dst, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    c = float(a @ b)
    axis = np.cross(a, b)
    s = float(np.linalg.norm(axis))
    if s < 1e-12:
        if c > 0.0:
            return np.eye(3)
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        return rotation_about_axis(perp, math.pi)
    k = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    return np.eye(3) + k + k @ k * ((1.0 - c) / (s * s))


# 2D utilities shared by planners, behaviors and the simulator.


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def points_segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized distance from many points to one segment."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(pts - closest, axis=1)


def point_in_convex_polygon_2d(p: np.ndarray, verts: np.ndarray, eps: float = 1e-9) -> bool:
    v = np.asarray(verts, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    rel = np.asarray(p, dtype=float) - v
    cross = e[:, 0] * rel[:, 1] - e[:, 1] * rel[:, 0]
    return bool(np.all(cross >= -eps) or np.all(cross <= eps))


def point_polygon_distance_2d(p: np.ndarray, verts: np.ndarray) -> float:
    """Distance from a point to a 2D polygon (0 inside)."""
    v = np.asarray(verts, dtype=float).reshape(-1, 2)
    if len(v) == 1:
        return float(np.linalg.norm(np.asarray(p) - v[0]))
    if len(v) == 2:
        return point_segment_distance(p, v[0], v[1])
    if point_in_convex_polygon_2d(p, v):
        return 0.0
    return min(
        point_segment_distance(p, v[i], v[(i + 1) % len(v)]) for i in range(len(v))
    )


def segments_intersect(a1, a2, b1, b2) -> bool:
    """True when 2D segments a1-a2 and b1-b2 intersect (touching counts)."""
    a1, a2, b1, b2 = (np.asarray(q, dtype=float) for q in (a1, a2, b1, b2))

    def orient(p, q, r):
        val = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        if abs(val) < 1e-12:
            return 0
        return 1 if val > 0 else -1

    def on_seg(p, q, r):
        return (
            min(p[0], q[0]) - 1e-12 <= r[0] <= max(p[0], q[0]) + 1e-12
            and min(p[1], q[1]) - 1e-12 <= r[1] <= max(p[1], q[1]) + 1e-12
        )

    o1, o2 = orient(a1, a2, b1), orient(a1, a2, b2)
    o3, o4 = orient(b1, b2, a1), orient(b1, b2, a2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(a1, a2, b1):
        return True
    if o2 == 0 and on_seg(a1, a2, b2):
        return True
    if o3 == 0 and on_seg(b1, b2, a1):
        return True
    if o4 == 0 and on_seg(b1, b2, a2):
        return True
    return False
