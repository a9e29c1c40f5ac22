"""Scan segmentation and geometric shape features for person detection.

Legs appear in ankle-height scans as short circular arcs; torsos appear in
torso-height scans as elliptical arcs. Both classifiers score a weighted
absolute distance to prototype feature values and threshold it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..scan import LaserScan


class FitDegenerate(Exception):
    """Ellipse fit impossible: too few, collinear or non-elliptic points."""


@dataclass(frozen=True)
class PerceptionConfig:
    """Tunables for segmentation, classification and tracking.

    Prototype values describe the simulator's human model: leg discs of
    radius 0.06 m seen as arcs, torso ellipse 0.28 x 0.16 m.
    """

    segment_gap: float = 0.15
    segment_min_points: int = 3

    leg_width: float = 0.12
    leg_circularity: float = 0.25
    leg_iav: float = 2.4
    leg_weights: tuple = (4.0, 2.0, 0.5)
    score_threshold: float = 1.0

    torso_major: float = 0.28
    torso_minor: float = 0.16
    torso_weights: tuple = (4.0, 4.0)
    torso_max_residual: float = 0.02

    leg_pair_min: float = 0.10
    leg_pair_max: float = 0.45
    leg_center_depth: float = 0.04   # arc centroid to disc center, along the ray
    torso_override: float = 0.40
    detection_sigma: float = 0.05

    sigma_a: float = 0.8             # process noise, m/s^2
    gate: float = 0.6
    spawn_frames: int = 3
    max_misses: int = 15
    max_speed: float = 3.0

    def leg_score(self, width: float, circularity: float, iav: float) -> float:
        w = self.leg_weights
        return (
            w[0] * abs(width - self.leg_width)
            + w[1] * abs(circularity - self.leg_circularity)
            + w[2] * abs(iav - self.leg_iav)
        )

    def torso_score(self, major: float, minor: float) -> float:
        w = self.torso_weights
        return w[0] * abs(major - self.torso_major) + w[1] * abs(minor - self.torso_minor)


DEFAULT_CONFIG = PerceptionConfig()


@dataclass
class ScanSegment:
    """Consecutive scan returns closer than the break distance, sensor frame."""

    points: np.ndarray           # (n, 2)
    height: str = "ankle"

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)

    def __len__(self) -> int:
        return len(self.points)

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass(frozen=True)
class LegFeatures:
    width: float
    circularity: float
    iav: float


@dataclass(frozen=True)
class TorsoFeatures:
    width: float
    circularity: float
    iav: float
    ellipse_major: float
    ellipse_minor: float


@dataclass(frozen=True)
class EllipseFit:
    center: np.ndarray
    major: float                 # full axis lengths, major >= minor
    minor: float
    angle: float                 # major axis direction, radians
    residual: float              # RMS point-to-curve distance, meters


def segment_scan(scan: LaserScan, config: PerceptionConfig = DEFAULT_CONFIG) -> list[ScanSegment]:
    """Split a scan into runs of returns with consecutive gaps below 0.15 m."""
    pts = scan.points()
    if len(pts) == 0:
        return []
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    breaks = np.flatnonzero(gaps > config.segment_gap)
    out = []
    start = 0
    for b in np.append(breaks, len(pts) - 1):
        run = pts[start:b + 1]
        if len(run) >= config.segment_min_points:
            out.append(ScanSegment(points=run, height=scan.height))
        start = b + 1
    return out


def _chord_and_sagitta(pts: np.ndarray) -> tuple[float, float]:
    a, b = pts[0], pts[-1]
    chord = float(np.linalg.norm(b - a))
    if chord < 1e-12:
        return 0.0, 0.0
    u = (b - a) / chord
    off = pts - a
    sagitta = float(np.max(np.abs(off[:, 0] * u[1] - off[:, 1] * u[0])))
    return chord, sagitta


def _inscribed_angles(pts: np.ndarray) -> np.ndarray:
    a, b = pts[0], pts[-1]
    inner = pts[1:-1]
    va = a - inner
    vb = b - inner
    na = np.linalg.norm(va, axis=1)
    nb = np.linalg.norm(vb, axis=1)
    keep = (na > 1e-9) & (nb > 1e-9)
    cosang = np.sum(va[keep] * vb[keep], axis=1) / (na[keep] * nb[keep])
    return np.arccos(np.clip(cosang, -1.0, 1.0))


def leg_features(seg: ScanSegment) -> LegFeatures:
    chord, sagitta = _chord_and_sagitta(seg.points)
    circ = sagitta / chord if chord > 1e-12 else 0.0
    angles = _inscribed_angles(seg.points)
    iav = float(angles.mean()) if len(angles) else 0.0
    return LegFeatures(width=chord, circularity=circ, iav=iav)


def classify_leg(seg: ScanSegment, config: PerceptionConfig = DEFAULT_CONFIG) -> tuple[float, bool]:
    f = leg_features(seg)
    if f.width <= 0.0:
        return float("inf"), False
    score = config.leg_score(f.width, f.circularity, f.iav)
    return score, score < config.score_threshold


def fit_ellipse(points: np.ndarray) -> EllipseFit:
    """Direct least-squares conic fit constrained to an ellipse.

    Stable two-block formulation; needs at least 5 points in general
    position. Raises FitDegenerate otherwise.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 5:
        raise FitDegenerate("ellipse fit needs at least 5 points")
    mean = pts.mean(axis=0)
    x, y = (pts - mean).T

    d1 = np.column_stack([x * x, x * y, y * y])
    d2 = np.column_stack([x, y, np.ones_like(x)])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError as err:
        raise FitDegenerate("points are collinear") from err
    m = s1 + s2 @ t
    m = np.array([m[2] / 2.0, -m[1], m[0] / 2.0])
    try:
        eigval, eigvec = np.linalg.eig(m)
    except np.linalg.LinAlgError as err:
        raise FitDegenerate("conic eigensystem failed") from err
    real = np.abs(np.imag(eigval)) < 1e-9 * (1.0 + np.abs(np.real(eigval)))
    ev = np.real(eigvec)
    cond = 4.0 * ev[0] * ev[2] - ev[1] ** 2
    ok = np.flatnonzero((cond > 0.0) & real)
    if len(ok) == 0:
        raise FitDegenerate("no elliptic solution")
    a1 = ev[:, ok[0]]
    coef = np.concatenate([a1, t @ a1])   # a, b, c, d, e, f about the mean

    a, b, c, d, e, f = coef
    det = 4.0 * a * c - b * b
    if det <= 1e-12 * max(1.0, a * a + b * b + c * c):
        raise FitDegenerate("degenerate conic")
    x0 = (b * e - 2.0 * c * d) / det
    y0 = (b * d - 2.0 * a * e) / det
    f0 = a * x0 * x0 + b * x0 * y0 + c * y0 * y0 + d * x0 + e * y0 + f
    quad = np.array([[a, b / 2.0], [b / 2.0, c]])
    lam, vec = np.linalg.eigh(quad)
    with np.errstate(divide="ignore", invalid="ignore"):
        semi2 = -f0 / lam
    if np.any(semi2 <= 0.0) or not np.all(np.isfinite(semi2)):
        raise FitDegenerate("conic is not an ellipse")
    semi = np.sqrt(semi2)
    order = np.argsort(semi)[::-1]
    major_dir = vec[:, order[0]]
    angle = math.atan2(major_dir[1], major_dir[0])

    # Sampson residual: algebraic distance over gradient norm
    fx = 2.0 * a * x + b * y + d
    fy = b * x + 2.0 * c * y + e
    alg = a * x * x + b * x * y + c * y * y + d * x + e * y + f
    grad = np.hypot(fx, fy)
    grad = np.where(grad < 1e-12, 1e-12, grad)
    residual = float(np.sqrt(np.mean((alg / grad) ** 2)))

    return EllipseFit(
        center=mean + np.array([x0, y0]),
        major=2.0 * float(semi[order[0]]),
        minor=2.0 * float(semi[order[1]]),
        angle=angle,
        residual=residual,
    )


def torso_features(seg: ScanSegment) -> TorsoFeatures:
    base = leg_features(seg)
    fit = fit_ellipse(seg.points)
    return TorsoFeatures(
        width=base.width,
        circularity=base.circularity,
        iav=base.iav,
        ellipse_major=fit.major,
        ellipse_minor=fit.minor,
    )


def classify_torso(seg: ScanSegment, config: PerceptionConfig = DEFAULT_CONFIG) -> tuple[float, bool]:
    """Ellipse-prototype score; never raises on bad data."""
    try:
        fit = fit_ellipse(seg.points)
    except FitDegenerate:
        return float("inf"), False
    score = config.torso_score(fit.major, fit.minor)
    ok = score < config.score_threshold and fit.residual < config.torso_max_residual
    return score, ok
