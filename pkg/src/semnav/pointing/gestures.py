"""Pointing ray geometry: hand frames, target angles and bias correction.

A gesture is read as a ray from a body joint through the hand. Everything
downstream works in the hand frame: origin at the hand, z-axis along the
ray, orientation the minimal (no-twist) rotation from the sensor frame.
Angular offsets of a target in that frame are corrected with measured bias
statistics and scored as a Mahalanobis distance under a diagonal model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..geometry import minimal_rotation
from ..skeleton import SkeletonFrame
from .stats import ELBOW_HAND, HEAD_HAND, TARGET2, ALL_TARGETS, AngleStats

JOINT_EPS = 1e-6

HOLD_WINDOW = 0.8          # seconds the arm must stay still
MIN_FRAME_RATE = 10.0      # skeleton frames per second needed to judge stillness
MAX_JOINT_DRIFT = 0.03     # per-joint movement allowed inside the window, metres
MIN_VERTICAL_ANGLE = 45.0  # forearm must leave the vertical by more than this, degrees

# Characteristic elevation of each statistics scope: the close-desk row was
# measured on steep downward points, the pooled row mixes gentler ones.
_SCOPE_ELEVATION = {TARGET2: math.radians(-45.0), ALL_TARGETS: math.radians(-15.0)}


class DegenerateRay(Exception):
    """The two joints defining the pointing ray coincide."""


class DegenerateTarget(Exception):
    """The target sits on the hand itself, its direction is undefined."""


@dataclass(frozen=True)
class GestureAngles:
    """Horizontal (theta) and vertical (psi) ray offsets, radians."""

    theta: float
    psi: float


@dataclass(frozen=True)
class HandFrame:
    """Rigid transform from the sensor frame to the hand frame."""

    rotation: np.ndarray   # sensor <- hand, columns are the hand axes
    origin: np.ndarray     # hand position in sensor coordinates
    method: str

    def to_hand(self, p: np.ndarray) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=float) - self.origin)

    def ray_direction(self) -> np.ndarray:
        """Pointing ray in sensor coordinates, unit length."""
        return self.rotation[:, 2].copy()


def hand_frame(obs: SkeletonFrame, method: str) -> HandFrame:
    """Hand frame whose z-axis runs from the chosen joint through the hand."""
    base = obs.elbow if method == ELBOW_HAND else obs.head
    ray = np.asarray(obs.hand, dtype=float) - np.asarray(base, dtype=float)
    length = float(np.linalg.norm(ray))
    if length < JOINT_EPS:
        raise DegenerateRay(f"{method} joints coincide within {JOINT_EPS} m")
    rotation = minimal_rotation(np.array([0.0, 0.0, 1.0]), ray / length)
    return HandFrame(rotation=rotation, origin=np.asarray(obs.hand, dtype=float), method=method)


def target_angles(frame: HandFrame, p_target: np.ndarray) -> GestureAngles:
    """Angular offsets of a point from the pointing ray."""
    q = frame.to_hand(p_target)
    if float(np.linalg.norm(q)) < JOINT_EPS:
        raise DegenerateTarget("target coincides with the hand")
    return GestureAngles(theta=math.atan2(q[0], q[2]), psi=math.atan2(q[1], q[2]))


def correct_and_score(angles: GestureAngles, stats: AngleStats) -> tuple[GestureAngles, float]:
    """Subtract the mean bias and score the residual offsets.

    Statistics are stored in degrees as measured; this is the one place
    where the units meet, so the conversion happens here and nowhere else.
    """
    theta_c = math.degrees(angles.theta) - stats.mu_theta
    psi_c = math.degrees(angles.psi) - stats.mu_psi
    d = math.hypot(theta_c / stats.sigma_theta, psi_c / stats.sigma_psi)
    corrected = GestureAngles(theta=math.radians(theta_c), psi=math.radians(psi_c))
    return corrected, d


def select_stats(
    method: str, elevation: float, table: dict[tuple[str, str], AngleStats]
) -> AngleStats:
    """Pick the statistics row whose typical elevation is nearest the gesture's.

    elevation is the ray's angle below the horizon, radians, negative down.
    """
    scope = min(_SCOPE_ELEVATION, key=lambda s: abs(elevation - _SCOPE_ELEVATION[s]))
    return table[(method, scope)]


@dataclass(frozen=True)
class GestureDetection:
    """A sustained pointing posture, with rays for both joint choices."""

    frame: SkeletonFrame
    ray_elbow_hand: np.ndarray
    ray_head_hand: Optional[np.ndarray]
    hold_time: float


def _vertical_angle(frame: SkeletonFrame) -> float:
    forearm = frame.hand - frame.elbow
    cos_v = abs(float(forearm[2])) / float(np.linalg.norm(forearm))
    return math.degrees(math.acos(min(1.0, cos_v)))


def _still(frame: SkeletonFrame, last: SkeletonFrame) -> bool:
    return (
        float(np.linalg.norm(frame.hand - last.hand)) < MAX_JOINT_DRIFT
        and float(np.linalg.norm(frame.elbow - last.elbow)) < MAX_JOINT_DRIFT
    )


def detect_gesture(
    frames: Sequence[SkeletonFrame], armed: bool = True
) -> Optional[GestureDetection]:
    """Fire when a raised arm has stayed still long enough.

    Needs HOLD_WINDOW seconds of history at MIN_FRAME_RATE or better; the
    forearm must sit more than MIN_VERTICAL_ANGLE off the vertical and both
    arm joints must have moved less than MAX_JOINT_DRIFT over the window.
    Detection is suppressed entirely unless a labeling action armed it.
    """
    if not armed or not frames:
        return None
    ordered = sorted(frames, key=lambda f: f.stamp)
    last = ordered[-1]
    window = [f for f in ordered if f.stamp >= last.stamp - HOLD_WINDOW - 1e-9]
    span = last.stamp - window[0].stamp
    if span < HOLD_WINDOW - 1e-9 or len(window) < 2:
        return None
    if (len(window) - 1) / span < MIN_FRAME_RATE - 1e-6:
        return None
    if _vertical_angle(last) <= MIN_VERTICAL_ANGLE:
        return None
    if not all(_still(f, last) for f in window):
        return None

    hold_start = last.stamp
    for f in reversed(ordered):
        if _still(f, last) and _vertical_angle(f) > MIN_VERTICAL_ANGLE:
            hold_start = f.stamp
        else:
            break

    ray_eh = last.hand - last.elbow
    ray_eh = ray_eh / np.linalg.norm(ray_eh)
    ray_hh: Optional[np.ndarray] = last.hand - last.head
    norm_hh = float(np.linalg.norm(ray_hh))
    ray_hh = ray_hh / norm_hh if norm_hh >= JOINT_EPS else None
    return GestureDetection(
        frame=last,
        ray_elbow_hand=ray_eh,
        ray_head_hand=ray_hh,
        hold_time=last.stamp - hold_start,
    )
