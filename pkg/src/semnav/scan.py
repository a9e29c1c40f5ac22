"""Laser scan container shared by the simulator, SLAM front end and tracker."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose2

NO_RETURN = float("inf")
MAX_RANGE = 30.0


@dataclass
class LaserScan:
    origin: Pose2               # sensor pose in the map frame (simulator truth)
    angle_min: float
    angle_increment: float
    ranges: np.ndarray          # meters; NO_RETURN where nothing was hit
    height: str = "ankle"       # {"ankle", "torso"}
    stamp: float = 0.0

    def __post_init__(self) -> None:
        self.ranges = np.asarray(self.ranges, dtype=float)

    @property
    def angles(self) -> np.ndarray:
        return self.angle_min + self.angle_increment * np.arange(len(self.ranges))

    def valid(self) -> np.ndarray:
        r = self.ranges
        return np.isfinite(r) & (r > 0.0) & (r <= MAX_RANGE)

    def points(self) -> np.ndarray:
        """Cartesian hit points in the sensor frame, invalid beams dropped."""
        keep = self.valid()
        a = self.angles[keep]
        r = self.ranges[keep]
        return np.column_stack([r * np.cos(a), r * np.sin(a)])

    def points_map(self) -> np.ndarray:
        """Hit points in the map frame of the scan origin."""
        pts = self.points()
        c, s = np.cos(self.origin.theta), np.sin(self.origin.theta)
        x = self.origin.x + c * pts[:, 0] - s * pts[:, 1]
        y = self.origin.y + s * pts[:, 0] + c * pts[:, 1]
        return np.column_stack([x, y])
