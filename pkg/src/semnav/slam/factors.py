"""Measurement factors with analytic Jacobians.

All residuals follow the convention r = h(state) - z, so a perfect
measurement gives r = 0.  Plane measurements are sign-ambiguous
(n, d) ~ (-n, -d); the plane factor resolves the ambiguity by flipping
the *measurement* toward the current prediction, which keeps the
Jacobians those of the raw prediction regardless of the flip.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..geometry import Pose2, PlaneParams, wrap_angle


def _cholesky_whitener(cov: np.ndarray, dim: int, name: str) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (dim, dim):
        raise ValueError(f"{name} covariance must be {dim}x{dim}, got {cov.shape}")
    try:
        lower = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} covariance is not positive definite") from exc
    # r_w = L^-1 r; computed once, applied by triangular solve.
    return lower


@dataclass
class PlaneMeasurement:
    """A planar patch seen from the robot, expressed in the robot frame."""

    params: PlaneParams                 # unit normal + offset, robot frame
    hull: np.ndarray                    # (k, 3) boundary points, robot frame
    noise: np.ndarray                   # 4x4 covariance on (n, d)
    stamp: float = 0.0
    true_id: Optional[int] = None       # simulator ground truth, testing only

    def __post_init__(self) -> None:
        self.hull = np.asarray(self.hull, dtype=float)
        self.noise = np.asarray(self.noise, dtype=float)
        _cholesky_whitener(self.noise, 4, "plane measurement")

    def vector(self) -> np.ndarray:
        return self.params.as_vector()


@dataclass
class SignMeasurement:
    """A recognized door sign: 3D position in the robot frame plus its text."""

    position: np.ndarray
    text: str
    noise: np.ndarray                   # 3x3 covariance on position
    stamp: float = 0.0
    door_segment: Optional[np.ndarray] = None   # (2, 2) map-frame doorway, if known

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.noise = np.asarray(self.noise, dtype=float)
        _cholesky_whitener(self.noise, 3, "sign measurement")
        if not self.text:
            raise ValueError("sign text must be non-empty")


def plane_predict(pose: Pose2, plane: PlaneParams) -> np.ndarray:
    """Map-frame plane expressed in the robot frame, sign preserved."""
    rot = pose.rot3()
    n_local = rot.T @ plane.n
    d_local = float(plane.n @ pose.translation3()) + plane.d
    return np.array([n_local[0], n_local[1], n_local[2], d_local])


def plane_measurement_sign(pose: Pose2, plane: PlaneParams, meas: PlaneMeasurement) -> float:
    """+1 or -1: orientation of the measurement that matches the prediction."""
    pred = plane_predict(pose, plane)
    return 1.0 if float(pred[:3] @ meas.params.n) >= 0.0 else -1.0


def plane_residual(pose: Pose2, plane: PlaneParams, meas: PlaneMeasurement) -> np.ndarray:
    pred = plane_predict(pose, plane)
    sign = 1.0 if float(pred[:3] @ meas.params.n) >= 0.0 else -1.0
    return pred - sign * meas.vector()


def plane_jacobians(pose: Pose2, plane: PlaneParams) -> tuple[np.ndarray, np.ndarray]:
    """d(residual)/d(pose), d(residual)/d(plane).

    The flip applied to the measurement does not depend on the state
    except on a measure-zero boundary, so these are the Jacobians of
    the raw prediction.

    Returns:
        (4x3, 4x4) arrays; pose columns ordered (x, y, theta), plane
        columns ordered (a, b, c, d).
    """
    c, s = np.cos(pose.theta), np.sin(pose.theta)
    n = plane.n
    j_pose = np.zeros((4, 3))
    # d(Rz^T n)/dtheta: derivative of [[c,s,0],[-s,c,0],[0,0,1]] wrt theta.
    j_pose[0, 2] = -s * n[0] + c * n[1]
    j_pose[1, 2] = -c * n[0] - s * n[1]
    j_pose[3, 0] = n[0]
    j_pose[3, 1] = n[1]

    j_plane = np.zeros((4, 4))
    j_plane[:3, :3] = pose.rot3().T
    j_plane[3, :3] = pose.translation3()
    j_plane[3, 3] = 1.0
    return j_pose, j_plane


def plane_projector(plane: PlaneParams) -> np.ndarray:
    """Derivative of (n, d) -> (n, d)/|n| at a unit-normal plane.

    Composing a plane Jacobian with this projector makes the linear
    model consistent with the renormalization applied after each
    optimizer step; the scale direction (n, d) is in its null space.
    """
    n = plane.n
    proj = np.zeros((4, 4))
    proj[:3, :3] = np.eye(3) - np.outer(n, n)
    proj[3, :3] = -plane.d * n
    proj[3, 3] = 1.0
    return proj


def sign_predict(pose: Pose2, point: np.ndarray) -> np.ndarray:
    return pose.to_local3(point)


def sign_residual(pose: Pose2, point: np.ndarray, meas: SignMeasurement) -> np.ndarray:
    return sign_predict(pose, point) - meas.position


def sign_jacobians(pose: Pose2, point: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """d(residual)/d(pose) (3x3) and d(residual)/d(point) (3x3)."""
    c, s = np.cos(pose.theta), np.sin(pose.theta)
    dx = point[0] - pose.x
    dy = point[1] - pose.y
    px = c * dx + s * dy
    py = -s * dx + c * dy
    j_pose = np.array([
        [-c, -s, py],
        [s, -c, -px],
        [0.0, 0.0, 0.0],
    ])
    j_point = pose.rot3().T
    return j_pose, j_point


def odometry_residual(pose_i: Pose2, pose_j: Pose2, rel: Pose2) -> np.ndarray:
    between = pose_i.between(pose_j)
    return np.array([
        between.x - rel.x,
        between.y - rel.y,
        wrap_angle(between.theta - rel.theta),
    ])


def odometry_jacobians(pose_i: Pose2, pose_j: Pose2) -> tuple[np.ndarray, np.ndarray]:
    """d(residual)/d(pose_i), d(residual)/d(pose_j), both 3x3."""
    c, s = np.cos(pose_i.theta), np.sin(pose_i.theta)
    dx = pose_j.x - pose_i.x
    dy = pose_j.y - pose_i.y
    rx = c * dx + s * dy
    ry = -s * dx + c * dy
    j_i = np.array([
        [-c, -s, ry],
        [s, -c, -rx],
        [0.0, 0.0, -1.0],
    ])
    j_j = np.array([
        [c, s, 0.0],
        [-s, c, 0.0],
        [0.0, 0.0, 1.0],
    ])
    return j_i, j_j


def prior_residual(pose: Pose2, mean: Pose2) -> np.ndarray:
    return np.array([
        pose.x - mean.x,
        pose.y - mean.y,
        wrap_angle(pose.theta - mean.theta),
    ])


@dataclass
class PriorFactor:
    key: tuple
    mean: Pose2
    whitener: np.ndarray = field(repr=False)
    dim: int = 3
    kind: str = "prior"


@dataclass
class OdometryFactor:
    key_i: tuple
    key_j: tuple
    rel: Pose2
    whitener: np.ndarray = field(repr=False)
    dim: int = 3
    kind: str = "odometry"


@dataclass
class PlaneFactor:
    pose_key: tuple
    plane_key: tuple
    meas: PlaneMeasurement
    whitener: np.ndarray = field(repr=False)
    dim: int = 4
    kind: str = "plane"


@dataclass
class SignFactor:
    pose_key: tuple
    point_key: tuple
    meas: SignMeasurement
    whitener: np.ndarray = field(repr=False)
    dim: int = 3
    kind: str = "sign"
