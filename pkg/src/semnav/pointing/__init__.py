"""Pointing gesture detection, ray estimation and target resolution."""
from .gestures import (
    DegenerateRay,
    DegenerateTarget,
    GestureAngles,
    GestureDetection,
    HandFrame,
    correct_and_score,
    detect_gesture,
    hand_frame,
    select_stats,
    target_angles,
)
from .resolve import (
    D_THRESHOLD,
    RATIO_THRESHOLD,
    HullTarget,
    PointTarget,
    TargetResolution,
    corrected_ray,
    resolve_target,
)
from .stats import (
    ALL_TARGETS,
    ELBOW_HAND,
    HEAD_HAND,
    METHODS,
    SCOPES,
    TARGET2,
    AngleStats,
    load_stats,
)

__all__ = [
    "ALL_TARGETS",
    "D_THRESHOLD",
    "ELBOW_HAND",
    "HEAD_HAND",
    "METHODS",
    "RATIO_THRESHOLD",
    "SCOPES",
    "TARGET2",
    "AngleStats",
    "DegenerateRay",
    "DegenerateTarget",
    "GestureAngles",
    "GestureDetection",
    "HandFrame",
    "HullTarget",
    "PointTarget",
    "TargetResolution",
    "corrected_ray",
    "correct_and_score",
    "detect_gesture",
    "hand_frame",
    "load_stats",
    "resolve_target",
    "select_stats",
    "target_angles",
]
