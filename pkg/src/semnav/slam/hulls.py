"""Landmark hull maintenance.

A plane landmark's spatial extent is the convex hull, on its own plane,
of every boundary point ever observed for it.  Merging projects the new
points onto the landmark plane along the plane normal, so drifting
estimates never push the hull off its surface.
"""
from __future__ import annotations

import numpy as np

from ..geometry import Pose2, convex_hull_planar, project_to_plane
from ..semantic_map import PlaneLandmark
from .factors import PlaneMeasurement


def merge_hull(landmark: PlaneLandmark, meas: PlaneMeasurement, pose: Pose2) -> PlaneLandmark:
    """Landmark with its hull grown by a new observation.

    The measured hull is carried from the robot frame into the map
    frame with `pose`, projected onto the landmark plane, and unioned
    with the existing hull.  The result does not depend on the order
    in which observations arrive.
    """
    measured_map = np.array([pose.to_map3(v) for v in np.asarray(meas.hull, dtype=float)])
    merged = merge_hull_points(landmark, measured_map)
    return merged


def merge_hull_points(landmark: PlaneLandmark, points_map: np.ndarray) -> PlaneLandmark:
    """Union map-frame boundary points into the landmark hull."""
    projected = project_to_plane(points_map, landmark.params)
    existing = project_to_plane(landmark.hull.vertices, landmark.params)
    union = np.vstack([existing, projected])
    hull = convex_hull_planar(union, landmark.params)
    return PlaneLandmark(
        id=landmark.id,
        params=landmark.params.copy(),
        hull=hull,
        label=landmark.label,
    )


def reproject_hull(landmark: PlaneLandmark, params) -> PlaneLandmark:
    """Landmark carried onto updated plane parameters.

    Used after optimization epochs: the stored hull is projected onto
    the new plane along its normal and re-hulled there.
    """
    projected = project_to_plane(landmark.hull.vertices, params)
    hull = convex_hull_planar(projected, params)
    return PlaneLandmark(id=landmark.id, params=params.copy(), hull=hull, label=landmark.label)
