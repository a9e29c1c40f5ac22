"""Fused person detection from ankle and torso scan segments.

Ankle legs must pair up (two discs at stride spacing); a torso ellipse is
a detection on its own and overrides any nearby leg pair.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import (
    DEFAULT_CONFIG,
    FitDegenerate,
    PerceptionConfig,
    ScanSegment,
    classify_leg,
    fit_ellipse,
)


@dataclass(frozen=True)
class PersonDetection:
    position: np.ndarray        # (2,) sensor frame
    kind: str                   # "legs" | "torso"
    noise: np.ndarray           # 2x2 covariance


def _leg_center(seg: ScanSegment, depth: float) -> np.ndarray:
    c = seg.centroid()
    r = np.linalg.norm(c)
    if r < 1e-9:
        return c
    return c + (c / r) * depth


def _pair_legs(centers: list[np.ndarray], config: PerceptionConfig) -> list[np.ndarray]:
    pairs = []
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            d = float(np.linalg.norm(centers[i] - centers[j]))
            if config.leg_pair_min <= d <= config.leg_pair_max:
                pairs.append((d, i, j))
    pairs.sort(key=lambda p: p[0])
    used: set[int] = set()
    out = []
    for _, i, j in pairs:
        if i in used or j in used:
            continue
        used.update((i, j))
        out.append(0.5 * (centers[i] + centers[j]))
    return out


def detect_people(
    segments: list[ScanSegment], config: PerceptionConfig = DEFAULT_CONFIG
) -> list[PersonDetection]:
    leg_centers = []
    torso_centers = []
    for seg in segments:
        if seg.height == "ankle":
            _, is_leg = classify_leg(seg, config)
            if is_leg:
                leg_centers.append(_leg_center(seg, config.leg_center_depth))
        else:
            try:
                fit = fit_ellipse(seg.points)
            except FitDegenerate:
                continue
            score = config.torso_score(fit.major, fit.minor)
            if score < config.score_threshold and fit.residual < config.torso_max_residual:
                torso_centers.append(fit.center)

    noise = np.eye(2) * config.detection_sigma**2
    detections = [PersonDetection(position=c, kind="torso", noise=noise.copy())
                  for c in torso_centers]
    for mid in _pair_legs(leg_centers, config):
        if any(np.linalg.norm(mid - t) < config.torso_override for t in torso_centers):
            continue
        detections.append(PersonDetection(position=mid, kind="legs", noise=noise.copy()))
    return detections
