"""Person detection in planar laser scans and Kalman track management."""
from .detect import PersonDetection, detect_people
from .features import (
    DEFAULT_CONFIG,
    EllipseFit,
    FitDegenerate,
    LegFeatures,
    PerceptionConfig,
    ScanSegment,
    TorsoFeatures,
    classify_leg,
    classify_torso,
    fit_ellipse,
    leg_features,
    segment_scan,
    torso_features,
)
from .tracker import PersonTrack, PersonTracker, kf_predict, kf_update

__all__ = [
    "DEFAULT_CONFIG",
    "EllipseFit",
    "FitDegenerate",
    "LegFeatures",
    "PerceptionConfig",
    "PersonDetection",
    "PersonTrack",
    "PersonTracker",
    "ScanSegment",
    "TorsoFeatures",
    "classify_leg",
    "classify_torso",
    "detect_people",
    "fit_ellipse",
    "kf_predict",
    "kf_update",
    "leg_features",
    "segment_scan",
    "torso_features",
]
