"""Line extraction from 2D laser scans and conversion to plane measurements.

Sequential RANSAC: repeatedly fit the best-supported line, refine it by
total least squares, keep the longest contiguous run of inliers along
the line, remove those points and continue.  Walls produce vertical
planes; the emitted measurement carries a hull extruded from the floor
to the sensor height so a single scan line still spans a proper patch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import PlaneParams, canonicalize_plane
from ..scan import LaserScan
from .factors import PlaneMeasurement

MIN_RETURNS = 20
MIN_LENGTH = 1.0
MIN_INLIERS = 15
INLIER_TOL = 0.03
GAP_SPLIT = 0.3
RANSAC_ROUNDS = 120


@dataclass
class LineSegment:
    start: np.ndarray           # (2,) sensor frame
    end: np.ndarray
    inliers: np.ndarray         # (k, 2) supporting points

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    def direction(self) -> np.ndarray:
        d = self.end - self.start
        return d / np.linalg.norm(d)


def _tls_line(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total least squares fit; returns (centroid, unit direction)."""
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centroid, vt[0]


def _longest_run(points: np.ndarray, centroid: np.ndarray, direction: np.ndarray,
                 max_gap: float) -> np.ndarray:
    """Indices of the longest gap-free run of points along the line."""
    proj = (points - centroid) @ direction
    order = np.argsort(proj)
    sorted_proj = proj[order]
    gaps = np.diff(sorted_proj) > max_gap
    runs = np.split(np.arange(len(order)), np.nonzero(gaps)[0] + 1)
    best = max(runs, key=len)
    return order[best]


def extract_lines(scan: LaserScan, *, min_length: float = MIN_LENGTH,
                  min_inliers: int = MIN_INLIERS, inlier_tol: float = INLIER_TOL,
                  max_lines: int = 8,
                  rng: np.random.Generator | None = None) -> list[LineSegment]:
    """Extract straight segments from a scan, longest support first.

    Scans with fewer than 20 valid returns produce no lines.  The
    extraction is deterministic for a given generator state.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    points = scan.points()
    if len(points) < MIN_RETURNS:
        return []
    segments: list[LineSegment] = []
    remaining = points
    while len(remaining) >= min_inliers and len(segments) < max_lines:
        best_mask = None
        best_count = 0
        for _ in range(RANSAC_ROUNDS):
            i, j = rng.choice(len(remaining), size=2, replace=False)
            delta = remaining[j] - remaining[i]
            norm = np.linalg.norm(delta)
            if norm < 1e-9:
                continue
            direction = delta / norm
            normal = np.array([-direction[1], direction[0]])
            dist = np.abs((remaining - remaining[i]) @ normal)
            mask = dist < inlier_tol
            count = int(mask.sum())
            if count > best_count:
                best_count = count
                best_mask = mask
        if best_mask is None or best_count < min_inliers:
            break
        # Refine on the consensus set, then re-gate once.
        centroid, direction = _tls_line(remaining[best_mask])
        normal = np.array([-direction[1], direction[0]])
        dist = np.abs((remaining - centroid) @ normal)
        mask = dist < inlier_tol
        if int(mask.sum()) < min_inliers:
            break
        subset = remaining[mask]
        centroid, direction = _tls_line(subset)
        run = _longest_run(subset, centroid, direction, GAP_SPLIT)
        run_points = subset[run]
        full_index = np.nonzero(mask)[0][run]
        if len(run_points) >= min_inliers:
            proj = (run_points - centroid) @ direction
            start = centroid + proj.min() * direction
            end = centroid + proj.max() * direction
            if np.linalg.norm(end - start) >= min_length:
                segments.append(LineSegment(start, end, run_points))
        keep = np.ones(len(remaining), dtype=bool)
        keep[full_index] = False
        if keep.all():
            break
        remaining = remaining[keep]
    segments.sort(key=lambda s: -len(s.inliers))
    return segments


def line_to_plane_measurement(segment: LineSegment, *, sensor_height: float,
                              noise: np.ndarray,
                              stamp: float = 0.0) -> PlaneMeasurement:
    """Vertical plane measurement for a wall segment seen by the laser.

    The parameters are canonical; the hull is the segment extruded from
    the floor to the sensor height so a single scan line still spans a
    proper patch.
    """
    direction = segment.direction()
    normal2 = np.array([-direction[1], direction[0]])
    n = np.array([normal2[0], normal2[1], 0.0])
    d = -float(n[:2] @ segment.start)
    params = canonicalize_plane(PlaneParams(n, d))
    hull = np.array([
        [segment.start[0], segment.start[1], 0.0],
        [segment.end[0], segment.end[1], 0.0],
        [segment.end[0], segment.end[1], sensor_height],
        [segment.start[0], segment.start[1], sensor_height],
    ])
    return PlaneMeasurement(params=params, hull=hull, noise=noise, stamp=stamp)
