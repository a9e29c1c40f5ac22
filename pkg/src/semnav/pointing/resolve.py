"""Resolve which candidate a corrected pointing ray singles out.

Point candidates are scored directly by their Mahalanobis angle distance.
Planar candidates are intersected with the corrected ray; the nearest hit
occludes any hull behind it and is scored at its hit point. Survivors of
the distance gate go through a ratio test between the two best scores to
flag gestures that cannot separate neighbouring objects.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ..geometry import Polygon3, ray_hit
from .gestures import DegenerateTarget, HandFrame, correct_and_score, target_angles
from .stats import AngleStats

D_THRESHOLD = 2.0
RATIO_THRESHOLD = 0.6


@dataclass(frozen=True)
class PointTarget:
    id: object
    point: np.ndarray


@dataclass(frozen=True)
class HullTarget:
    id: object
    hull: Polygon3


Candidate = Union[PointTarget, HullTarget]


@dataclass(frozen=True)
class TargetResolution:
    """Outcome of one resolution: a single target, a tie, or nothing."""

    outcome: str                      # "target" | "ambiguous" | "none"
    target_id: Optional[object]
    d_mah: Optional[float]
    ambiguous_ids: tuple = ()
    distances: dict = field(default_factory=dict)


def corrected_ray(frame: HandFrame, stats: AngleStats) -> np.ndarray:
    """Where the person actually points once the mean bias is removed.

    The direction whose raw angles equal the measured bias means scores a
    corrected offset of zero, so that is the ray to cast into the map.
    """
    d = np.array(
        [
            math.tan(math.radians(stats.mu_theta)),
            math.tan(math.radians(stats.mu_psi)),
            1.0,
        ]
    )
    d = frame.rotation @ d
    return d / np.linalg.norm(d)


def resolve_target(
    frame: HandFrame,
    candidates: Sequence[Candidate],
    stats: AngleStats,
    d_threshold: float = D_THRESHOLD,
    ratio_threshold: float = RATIO_THRESHOLD,
) -> TargetResolution:
    if not candidates:
        raise ValueError("resolve_target needs at least one candidate")

    ray = corrected_ray(frame, stats)
    distances: dict = {}
    hull_hits: list[tuple[float, object, np.ndarray]] = []
    for cand in candidates:
        if isinstance(cand, HullTarget):
            hit = ray_hit(frame.origin, ray, cand.hull)
            if hit is None:
                distances[cand.id] = math.inf
            else:
                hull_hits.append((float((hit - frame.origin) @ ray), cand.id, hit))
            continue
        try:
            _, d = correct_and_score(target_angles(frame, cand.point), stats)
        except DegenerateTarget:
            d = math.inf
        distances[cand.id] = d

    hull_hits.sort(key=lambda h: h[0])
    for rank, (_, cid, hit) in enumerate(hull_hits):
        if rank == 0:
            _, d = correct_and_score(target_angles(frame, hit), stats)
            distances[cid] = d
        else:
            distances[cid] = math.inf

    eligible = sorted(
        ((d, cid) for cid, d in distances.items() if d <= d_threshold),
        key=lambda item: (item[0], str(item[1])),
    )
    if not eligible:
        return TargetResolution("none", None, None, (), distances)
    if len(eligible) == 1:
        d, cid = eligible[0]
        return TargetResolution("target", cid, d, (), distances)

    d_min, best = eligible[0]
    d_second = eligible[1][0]
    ratio = d_min / d_second if d_second > 0.0 else 1.0
    if ratio > ratio_threshold:
        tied = tuple(cid for d, cid in eligible if d * ratio_threshold <= d_min + 1e-12)
        return TargetResolution("ambiguous", None, None, tied, distances)
    return TargetResolution("target", best, d_min, (), distances)
