"""Joint compatibility data association.

Works on a linearized snapshot of the estimation problem: innovations
and Jacobian blocks per (measurement, landmark) candidate plus the
joint prior covariance of the involved variables.  The search maximizes
the number of pairings; among assignments with the maximal count it
returns the one with the smallest joint Mahalanobis distance.

A measurement left unmatched is declared NEW when even its nearest
candidate misses the individual gate by more than a factor of two,
otherwise SPURIOUS.  With no candidates at all it is NEW.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Hashable, Optional

import numpy as np
from scipy.stats import chi2

NEW = "new"
SPURIOUS = "spurious"

GATE_CONFIDENCE = 0.95
NEW_LANDMARK_FACTOR = 2.0


@lru_cache(maxsize=64)
def chi2_gate(dim: int) -> float:
    return float(chi2.ppf(GATE_CONFIDENCE, dim))


@dataclass
class Candidate:
    """Linearization of one measurement against one landmark."""

    landmark: Hashable
    residual: np.ndarray                      # h(x) - z, measurement frame
    blocks: dict[Hashable, np.ndarray]        # var key -> d(residual)/d(var)

    def __post_init__(self) -> None:
        self.residual = np.asarray(self.residual, dtype=float)


@dataclass
class MeasurementEntry:
    noise: np.ndarray                         # measurement covariance
    candidates: list[Candidate] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.noise = np.asarray(self.noise, dtype=float)

    @property
    def dim(self) -> int:
        return self.noise.shape[0]


@dataclass
class AssociationProblem:
    var_keys: list                            # ordering of variable blocks
    var_dims: list[int]
    covariance: np.ndarray                    # joint prior over var_keys
    measurements: list[MeasurementEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.covariance = np.asarray(self.covariance, dtype=float)
        total = int(sum(self.var_dims))
        if self.covariance.shape != (total, total):
            raise ValueError(
                f"covariance is {self.covariance.shape}, variable blocks need {total}"
            )
        self._offsets = {}
        off = 0
        for key, dim in zip(self.var_keys, self.var_dims):
            self._offsets[key] = (off, dim)
            off += dim

    def stacked_jacobian(self, candidates: list[Candidate]) -> np.ndarray:
        rows = sum(c.residual.shape[0] for c in candidates)
        total = self.covariance.shape[0]
        jac = np.zeros((rows, total))
        row = 0
        for cand in candidates:
            dim = cand.residual.shape[0]
            for key, block in cand.blocks.items():
                off, vdim = self._offsets[key]
                jac[row:row + dim, off:off + vdim] = block
            row += dim
        return jac

    def joint_mahalanobis(self, pairs: list[tuple[int, Candidate]]) -> float:
        """Squared joint Mahalanobis distance of the given pairings."""
        if not pairs:
            return 0.0
        candidates = [c for _, c in pairs]
        residual = np.concatenate([c.residual for c in candidates])
        jac = self.stacked_jacobian(candidates)
        innov_cov = jac @ self.covariance @ jac.T
        row = 0
        for idx, _ in pairs:
            noise = self.measurements[idx].noise
            dim = noise.shape[0]
            innov_cov[row:row + dim, row:row + dim] += noise
            row += dim
        sol = np.linalg.solve(innov_cov, residual)
        return float(residual @ sol)

    def individual_mahalanobis(self, meas_index: int, cand: Candidate) -> float:
        return self.joint_mahalanobis([(meas_index, cand)])


@dataclass
class Association:
    pairings: list[Optional[Hashable]]        # landmark or None per measurement
    unmatched: list[str]                      # NEW / SPURIOUS for the Nones, "" else
    joint_distance: float
    joint_gate: float

    def matches(self) -> dict[int, Hashable]:
        return {i: lm for i, lm in enumerate(self.pairings) if lm is not None}


def jcbb(problem: AssociationProblem) -> Association:
    n_meas = len(problem.measurements)
    if n_meas == 0:
        return Association([], [], 0.0, 0.0)

    # Individual distances, computed once; gate per measurement dimension.
    ind_dist: list[dict[Hashable, float]] = []
    gated: list[list[Candidate]] = []
    for i, entry in enumerate(problem.measurements):
        dists = {}
        passing = []
        for cand in entry.candidates:
            d2 = problem.individual_mahalanobis(i, cand)
            dists[cand.landmark] = d2
            if d2 <= chi2_gate(entry.dim):
                passing.append((d2, cand))
        passing.sort(key=lambda t: t[0])
        gated.append([c for _, c in passing])
        ind_dist.append(dists)

    # Largest gate any complete assignment could face; a partial joint
    # distance above it can never pass the final joint gate because the
    # joint distance is nondecreasing in the pairing set.
    max_dims = sum(
        e.dim for e, cands in zip(problem.measurements, gated) if cands
    )
    gate_ceiling = chi2_gate(max_dims) if max_dims else 0.0

    best: dict = {"count": -1, "dist": np.inf, "pairs": []}

    def consider(pairs: list[tuple[int, Candidate]]) -> None:
        count = len(pairs)
        if count < best["count"]:
            return
        dist = problem.joint_mahalanobis(pairs)
        if pairs and dist > chi2_gate(sum(problem.measurements[i].dim for i, _ in pairs)):
            return
        if count > best["count"] or (count == best["count"] and dist < best["dist"]):
            best["count"] = count
            best["dist"] = dist
            best["pairs"] = list(pairs)

    def recurse(i: int, pairs: list[tuple[int, Candidate]], used: set) -> None:
        remaining = n_meas - i
        if len(pairs) + remaining < best["count"]:
            return
        if i == n_meas:
            consider(pairs)
            return
        for cand in gated[i]:
            if cand.landmark in used:
                continue
            pairs.append((i, cand))
            partial = problem.joint_mahalanobis(pairs)
            if partial <= gate_ceiling:
                used.add(cand.landmark)
                recurse(i + 1, pairs, used)
                used.discard(cand.landmark)
            pairs.pop()
        # Leave this measurement unmatched.
        recurse(i + 1, pairs, used)

    recurse(0, [], set())

    pairings: list[Optional[Hashable]] = [None] * n_meas
    for i, cand in best["pairs"]:
        pairings[i] = cand.landmark
    unmatched = []
    for i in range(n_meas):
        if pairings[i] is not None:
            unmatched.append("")
            continue
        dists = ind_dist[i]
        gate = chi2_gate(problem.measurements[i].dim)
        nearest = min(dists.values()) if dists else np.inf
        unmatched.append(NEW if nearest > NEW_LANDMARK_FACTOR * gate else SPURIOUS)

    paired = [(i, c) for i, c in best["pairs"]]
    joint_gate = (
        chi2_gate(sum(problem.measurements[i].dim for i, _ in paired)) if paired else 0.0
    )
    return Association(pairings, unmatched, best["dist"], joint_gate)
