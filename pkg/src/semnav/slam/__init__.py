"""Plane-landmark SLAM: factor graph, optimizer, data association, front end."""
from .factors import (
    OdometryFactor,
    PlaneFactor,
    PlaneMeasurement,
    PriorFactor,
    SignFactor,
    SignMeasurement,
)
from .graph import FactorGraph, OptimizeResult, SingularSystem, VarKey
from .jcbb import NEW, SPURIOUS, AssociationProblem, Candidate, MeasurementEntry, jcbb
from .lines import LineSegment, extract_lines, line_to_plane_measurement
from .hulls import merge_hull
from .frontend import PlaneSlam, SlamConfig

__all__ = [
    "AssociationProblem",
    "Candidate",
    "FactorGraph",
    "LineSegment",
    "MeasurementEntry",
    "NEW",
    "OdometryFactor",
    "OptimizeResult",
    "PlaneFactor",
    "PlaneMeasurement",
    "PlaneSlam",
    "PriorFactor",
    "SignFactor",
    "SignMeasurement",
    "SingularSystem",
    "SlamConfig",
    "SPURIOUS",
    "VarKey",
    "extract_lines",
    "jcbb",
    "line_to_plane_measurement",
    "merge_hull",
]
