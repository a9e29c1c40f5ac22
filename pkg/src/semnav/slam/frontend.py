"""Incremental SLAM session: keyframes, association, landmark lifecycle.

Measurements accumulate in a queue between optimization epochs.  Each
epoch anchors a new keyframe pose, associates buffered plane
measurements with JCBB against the cached joint marginals, debounces
new landmarks (a plane must be seen twice consistently before it enters
the graph), associates door signs by text, optimizes, and publishes an
immutable snapshot.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..geometry import (
    PlaneParams,
    Pose2,
    canonicalize_plane,
    convex_hull_planar,
    project_to_plane,
    transform_plane_raw,
)
from ..semantic_map import PlaneLandmark, SemanticMap
from .factors import (
    PlaneMeasurement,
    SignMeasurement,
    plane_jacobians,
    plane_projector,
    plane_residual,
    sign_jacobians,
    sign_residual,
)
from .graph import FactorGraph, VarKey
from .hulls import merge_hull_points, reproject_hull
from .jcbb import (
    NEW,
    NEW_LANDMARK_FACTOR,
    AssociationProblem,
    Candidate,
    MeasurementEntry,
    chi2_gate,
    jcbb,
)


@dataclass
class SlamConfig:
    keyframe_translation: float = 0.15      # m of motion that forces a new keyframe
    keyframe_rotation: float = 0.15         # rad
    debounce_normal_angle: float = 0.17     # rad tolerance matching pending planes
    debounce_offset: float = 0.15           # m tolerance on plane offset
    debounce_proximity: float = 1.5         # m between hull centroids
    pending_ttl: int = 8                    # epochs a pending plane survives unconfirmed
    max_epoch_iterations: int = 25          # LM cap for mid-session epochs


@dataclass(frozen=True)
class SlamSnapshot:
    """Immutable published estimate."""

    epoch: int
    pose: Pose2
    trajectory: tuple
    map_version: int
    cost: float
    landmark_count: int


@dataclass(eq=False)
class _PendingPlane:
    params_map: PlaneParams          # canonical, map frame
    hull_map: np.ndarray
    pose_key: VarKey
    meas: PlaneMeasurement
    age: int = 0
    hits: int = 1


@dataclass
class _Batch:
    """Measurements stamped with where they were captured.

    ``delta`` is the odometry accumulated between ``pose_key`` and the
    capture instant; ``delta_cov`` its covariance.  Association happens at
    epoch time, after compensating the batch into the keyframe's frame.
    """

    pose_key: VarKey
    delta: Pose2
    delta_cov: np.ndarray
    planes: list[PlaneMeasurement] = field(default_factory=list)
    signs: list[SignMeasurement] = field(default_factory=list)


@dataclass
class _OdoAccumulator:
    rel: Pose2 = field(default_factory=lambda: Pose2(0.0, 0.0, 0.0))
    cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    steps: int = 0

    def push(self, step: Pose2, cov: np.ndarray) -> None:
        c, s = np.cos(self.rel.theta), np.sin(self.rel.theta)
        j_a = np.array([
            [1.0, 0.0, -s * step.x - c * step.y],
            [0.0, 1.0, c * step.x - s * step.y],
            [0.0, 0.0, 1.0],
        ])
        j_b = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        self.cov = j_a @ self.cov @ j_a.T + j_b @ np.asarray(cov, dtype=float) @ j_b.T
        self.rel = self.rel.compose(step)
        self.steps += 1

    def reset(self) -> None:
        self.rel = Pose2(0.0, 0.0, 0.0)
        self.cov = np.zeros((3, 3))
        self.steps = 0


class PlaneSlam:
    """Front end owning the factor graph and the semantic map."""

    def __init__(self, initial_pose: Pose2, prior_cov: np.ndarray | None = None,
                 config: SlamConfig | None = None,
                 semantic_map: SemanticMap | None = None) -> None:
        self.config = config or SlamConfig()
        self.graph = FactorGraph()
        self.map = semantic_map if semantic_map is not None else SemanticMap()
        cov = np.diag([1e-6, 1e-6, 1e-6]) if prior_cov is None else np.asarray(prior_cov)
        self._keyframes: list[VarKey] = [self.graph.add_pose(initial_pose)]
        self.graph.add_prior(self._keyframes[0], initial_pose, cov)
        self._odo = _OdoAccumulator()
        self._batches: list[_Batch] = []
        self._pending: list[_PendingPlane] = []
        self._plane_vars: dict[int, VarKey] = {}      # landmark id -> plane var
        self._plane_ids: dict[VarKey, int] = {}
        self._sign_vars: dict[int, VarKey] = {}       # landmark id -> point var
        self._marginal_cache: Optional[tuple[list[VarKey], np.ndarray]] = None
        self._epoch = 0
        self._cost = 0.0
        self._pose_cov = cov.copy()
        self._lock = threading.Lock()
        self._snapshot = self._make_snapshot()

    # -- inputs ------------------------------------------------------------

    def enqueue_odometry(self, step: Pose2, cov: np.ndarray) -> None:
        self._odo.push(step, cov)

    def enqueue_planes(self, measurements: list[PlaneMeasurement]) -> None:
        if measurements:
            self._stash_batch().planes.extend(measurements)

    def enqueue_signs(self, measurements: list[SignMeasurement]) -> None:
        if measurements:
            self._stash_batch().signs.extend(measurements)

    def _stash_batch(self) -> _Batch:
        """Batch for the current capture instant, cutting a keyframe if due.

        Cutting at enqueue keeps the compensation offset below the keyframe
        thresholds, so measurements are never re-anchored across more than
        one threshold's worth of odometric drift.
        """
        if (
            np.hypot(self._odo.rel.x, self._odo.rel.y) >= self.config.keyframe_translation
            or abs(self._odo.rel.theta) >= self.config.keyframe_rotation
        ):
            self._new_keyframe()
        pose_key = self._keyframes[-1]
        rel = self._odo.rel
        if self._batches:
            last = self._batches[-1]
            if last.pose_key == pose_key and last.delta == rel:
                return last
        batch = _Batch(pose_key, rel, self._odo.cov.copy())
        self._batches.append(batch)
        return batch

    # -- estimates ---------------------------------------------------------

    def current_pose(self) -> Pose2:
        return self.graph.pose(self._keyframes[-1]).compose(self._odo.rel)

    def trajectory(self) -> list[Pose2]:
        return [self.graph.pose(k) for k in self._keyframes]

    def snapshot(self) -> SlamSnapshot:
        with self._lock:
            return self._snapshot

    def _make_snapshot(self) -> SlamSnapshot:
        return SlamSnapshot(
            epoch=self._epoch,
            pose=self.current_pose(),
            trajectory=tuple(self.trajectory()),
            map_version=self.map.version,
            cost=self._cost,
            landmark_count=len(self._plane_vars) + len(self._sign_vars),
        )

    # -- epoch -------------------------------------------------------------

    def epoch(self) -> SlamSnapshot:
        """Drain queued batches, associate, optimize, publish."""
        moved = (
            np.hypot(self._odo.rel.x, self._odo.rel.y) >= self.config.keyframe_translation
            or abs(self._odo.rel.theta) >= self.config.keyframe_rotation
        )
        if moved:
            self._new_keyframe()

        batches = self._batches
        self._batches = []
        for batch in batches:
            if batch.planes:
                planes = [
                    self._compensate_plane(batch.delta, batch.delta_cov, m)
                    for m in batch.planes
                ]
                self._associate_planes(batch.pose_key, planes)
            for meas in batch.signs:
                self._associate_sign(
                    batch.pose_key,
                    self._compensate_sign(batch.delta, batch.delta_cov, meas),
                )

        result = self.graph.optimize(self.config.max_epoch_iterations)
        self._cost = result.cost
        self._sync_map()
        self._refresh_marginals()
        self._age_pending()
        self._epoch += 1
        with self._lock:
            self._snapshot = self._make_snapshot()
        return self._snapshot

    def _new_keyframe(self) -> None:
        last = self._keyframes[-1]
        rel = self._odo.rel
        cov = self._odo.cov
        if self._odo.steps == 0:
            # Anchor measurements even without motion; tiny stabilizing cov.
            cov = np.diag([1e-6, 1e-6, 1e-6])
        cov = cov + np.diag([1e-10, 1e-10, 1e-10])
        initial = self.graph.pose(last).compose(rel)
        key = self.graph.add_pose(initial)
        self.graph.add_odometry(last, key, rel, cov)
        self._keyframes.append(key)
        self._odo.reset()

    # -- batch compensation --------------------------------------------------

    def _compensate_plane(self, delta: Pose2, delta_cov: np.ndarray,
                          meas: PlaneMeasurement) -> PlaneMeasurement:
        """Express a plane observed at keyframe ∘ delta in the keyframe frame.

        The mean moves through the rigid transform; the covariance through
        the transform Jacobian plus the odometric uncertainty of delta.
        """
        if delta == Pose2(0.0, 0.0, 0.0):
            return meas
        # delta carries keyframe -> capture; planes move by the inverse.
        params = canonicalize_plane(transform_plane_raw(delta.inverse(), meas.params))
        hull = np.array([delta.to_map3(v) for v in meas.hull])
        rot = delta.rot3()
        t = delta.translation3()
        transform = np.zeros((4, 4))
        transform[:3, :3] = rot
        transform[3, :3] = -t @ rot
        transform[3, 3] = 1.0
        j_delta, _ = plane_jacobians(delta, params)
        j = transform @ j_delta
        noise = transform @ meas.noise @ transform.T + j @ delta_cov @ j.T
        return PlaneMeasurement(params=params, hull=hull, noise=noise,
                                stamp=meas.stamp, true_id=meas.true_id)

    def _compensate_sign(self, delta: Pose2, delta_cov: np.ndarray,
                         meas: SignMeasurement) -> SignMeasurement:
        if delta == Pose2(0.0, 0.0, 0.0):
            return meas
        position = delta.to_map3(meas.position)
        rot = delta.rot3()
        c, s = np.cos(delta.theta), np.sin(delta.theta)
        spin = np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])
        j = np.zeros((3, 3))
        j[:2, :2] = np.eye(2)
        j[:, 2] = spin @ meas.position
        noise = rot @ meas.noise @ rot.T + j @ delta_cov @ j.T
        return SignMeasurement(position=position, text=meas.text, noise=noise,
                               stamp=meas.stamp, door_segment=meas.door_segment)

    # -- plane association ---------------------------------------------------

    def _candidate_vars(self) -> list[VarKey]:
        return [self._plane_vars[lid] for lid in sorted(self._plane_vars)]

    def _joint_prior(self, pose_key: VarKey, plane_keys: list[VarKey]) -> tuple[list, np.ndarray]:
        """Joint covariance over (pose_key, plane_keys) at the current estimate.

        Uses the cached post-epoch marginal of (last optimized keyframe,
        landmarks) propagated through the odometry accumulated since.
        """
        keys = [pose_key] + plane_keys
        cached = self._marginal_cache
        if cached is None or any(k not in cached[0] for k in plane_keys):
            return keys, self.graph.joint_marginal(keys)
        cached_keys, cached_cov = cached
        anchor = cached_keys[0]
        if pose_key == anchor:
            idx = [0] + [cached_keys.index(k) for k in plane_keys]
            return keys, self._select_blocks(cached_keys, cached_cov, idx)
        # Propagate the anchor marginal through the odometry chain to the
        # new keyframe: x_new = x_anchor ∘ rel.
        rel = self._rel_between(anchor, pose_key)
        c, s = np.cos(self.graph.pose(anchor).theta), np.sin(self.graph.pose(anchor).theta)
        j_a = np.array([
            [1.0, 0.0, -s * rel.x - c * rel.y],
            [0.0, 1.0, c * rel.x - s * rel.y],
            [0.0, 0.0, 1.0],
        ])
        transform = np.zeros((3 + 4 * len(plane_keys), cached_cov.shape[0]))
        transform[:3, :3] = j_a
        for i, key in enumerate(plane_keys):
            src = cached_keys.index(key)
            src_off = 3 + 4 * (src - 1)
            transform[3 + 4 * i:7 + 4 * i, src_off:src_off + 4] = np.eye(4)
        cov = transform @ cached_cov @ transform.T
        cov[:3, :3] += self._chain_noise(anchor, pose_key)
        return keys, cov

    def _select_blocks(self, keys: list[VarKey], cov: np.ndarray, idx: list[int]) -> np.ndarray:
        offsets = []
        off = 0
        for k in keys:
            offsets.append(off)
            off += self.graph.dim_of(k)
        cols = np.concatenate([
            np.arange(offsets[i], offsets[i] + self.graph.dim_of(keys[i])) for i in idx
        ])
        return cov[np.ix_(cols, cols)]

    def _rel_between(self, key_a: VarKey, key_b: VarKey) -> Pose2:
        return self.graph.pose(key_a).between(self.graph.pose(key_b))

    def _chain_noise(self, key_a: VarKey, key_b: VarKey) -> np.ndarray:
        """Odometry covariance accumulated between two keyframes."""
        total = np.zeros((3, 3))
        start = self._keyframes.index(key_a)
        stop = self._keyframes.index(key_b)
        for factor in self.graph.factors:
            if factor.kind != "odometry":
                continue
            try:
                i = self._keyframes.index(factor.key_i)
                j = self._keyframes.index(factor.key_j)
            except ValueError:
                continue
            if start <= i < stop and start < j <= stop:
                lower = factor.whitener
                total += lower @ lower.T
        return total

    def _premerge_coplanar(
        self, measurements: list[PlaneMeasurement]
    ) -> list[PlaneMeasurement]:
        """Fuse same-frame measurements of one infinite plane.

        Landmarks are infinite planes, so wall patches seen on both sides of
        a doorway are the same landmark and must not compete for it under
        the associator's one-to-one assignment.
        """
        merged: list[PlaneMeasurement] = []
        for meas in measurements:
            home = None
            for idx, prev in enumerate(merged):
                dot = float(np.clip(prev.params.n @ meas.params.n, -1.0, 1.0))
                if np.arccos(dot) > self.config.debounce_normal_angle:
                    continue
                if abs(prev.params.d - meas.params.d) > self.config.debounce_offset:
                    continue
                home = idx
                break
            if home is None:
                merged.append(meas)
                continue
            prev = merged[home]
            n = prev.params.n + meas.params.n
            n = n / np.linalg.norm(n)
            params = canonicalize_plane(
                PlaneParams(n, 0.5 * (prev.params.d + meas.params.d))
            )
            merged[home] = PlaneMeasurement(
                params=params,
                hull=np.vstack([prev.hull, meas.hull]),
                noise=prev.noise,
                stamp=prev.stamp,
                true_id=prev.true_id,
            )
        return merged

    def _associate_planes(self, pose_key: VarKey, measurements: list[PlaneMeasurement]) -> None:
        measurements = self._premerge_coplanar(measurements)
        pose = self.graph.pose(pose_key)
        plane_keys = self._candidate_vars()
        var_keys, joint_cov = self._joint_prior(pose_key, plane_keys)
        entries = []
        for meas in measurements:
            cands = []
            for key in plane_keys:
                plane = self.graph.plane(key)
                residual = plane_residual(pose, plane, meas)
                j_pose, j_plane = plane_jacobians(pose, plane)
                j_plane = j_plane @ plane_projector(plane)
                cands.append(Candidate(key, residual, {pose_key: j_pose, key: j_plane}))
            entries.append(MeasurementEntry(noise=meas.noise, candidates=cands))
        problem = AssociationProblem(
            var_keys=var_keys,
            var_dims=[self.graph.dim_of(k) for k in var_keys],
            covariance=joint_cov,
            measurements=entries,
        )
        assoc = jcbb(problem)
        for meas, paired, verdict in zip(measurements, assoc.pairings, assoc.unmatched):
            if paired is not None:
                self.graph.add_plane_factor(pose_key, paired, meas)
                lid = self._plane_ids[paired]
                landmark = self.map.get(lid)
                hull_map = np.array([pose.to_map3(v) for v in meas.hull])
                self.map.replace(merge_hull_points(landmark, hull_map))
            elif verdict == NEW:
                self._handle_new_plane(pose_key, meas)
            # SPURIOUS measurements are dropped.

    def _handle_new_plane(self, pose_key: VarKey, meas: PlaneMeasurement) -> None:
        pose = self.graph.pose(pose_key)
        params_map = canonicalize_plane(transform_plane_raw(pose.inverse(), meas.params))
        hull_map = np.array([pose.to_map3(v) for v in meas.hull])
        for pending in self._pending:
            if self._pending_matches(pending, params_map, hull_map):
                pending.hits += 1
                self._promote(pending, pose_key, meas, params_map, hull_map)
                return
        self._pending.append(
            _PendingPlane(params_map, hull_map, pose_key, meas)
        )

    def _pending_matches(self, pending: _PendingPlane, params_map: PlaneParams,
                         hull_map: np.ndarray) -> bool:
        dot = float(np.clip(pending.params_map.n @ params_map.n, -1.0, 1.0))
        if np.arccos(abs(dot)) > self.config.debounce_normal_angle:
            return False
        if abs(pending.params_map.d - params_map.d) > self.config.debounce_offset:
            return False
        gap = np.linalg.norm(pending.hull_map.mean(axis=0) - hull_map.mean(axis=0))
        return gap <= self.config.debounce_proximity

    def _promote(self, pending: _PendingPlane, pose_key: VarKey,
                 meas: PlaneMeasurement, params_map: PlaneParams,
                 hull_map: np.ndarray) -> None:
        self._pending.remove(pending)
        plane_key = self.graph.add_plane(pending.params_map)
        self.graph.add_plane_factor(pending.pose_key, plane_key, pending.meas)
        self.graph.add_plane_factor(pose_key, plane_key, meas)
        points = np.vstack([pending.hull_map, hull_map])
        projected = project_to_plane(points, pending.params_map)
        hull = convex_hull_planar(projected, pending.params_map)
        lid = self.map.allocate_id()
        self.map.add(PlaneLandmark(id=lid, params=pending.params_map.copy(), hull=hull))
        self._plane_vars[lid] = plane_key
        self._plane_ids[plane_key] = lid

    def _age_pending(self) -> None:
        for pending in self._pending:
            pending.age += 1
        self._pending = [p for p in self._pending if p.age <= self.config.pending_ttl]

    # -- sign association ----------------------------------------------------

    def _associate_sign(self, pose_key: VarKey, meas: SignMeasurement) -> None:
        """Associate by text, then gate on position.

        Identical texts on different doors are expected (fire exits, wing
        repeats), so a text match alone never fuses: the nearest same-text
        landmark must also pass an individual Mahalanobis gate.  Far beyond
        the gate starts a second landmark with the same text; the gray zone
        in between drops the measurement.
        """
        pose = self.graph.pose(pose_key)
        _, pose_cov = self._joint_prior(pose_key, [])
        gate = chi2_gate(3)
        best: Optional[tuple[float, VarKey]] = None
        for lid in sorted(self._sign_vars):
            if self.map.get(lid).text != meas.text:
                continue
            key = self._sign_vars[lid]
            point = self.graph.point(key)
            residual = sign_residual(pose, point, meas)
            j_pose, _ = sign_jacobians(pose, point)
            innovation = j_pose @ pose_cov @ j_pose.T + meas.noise
            d2 = float(residual @ np.linalg.solve(innovation, residual))
            if best is None or d2 < best[0]:
                best = (d2, key)
        if best is not None:
            if best[0] <= gate:
                self.graph.add_sign_factor(pose_key, best[1], meas)
                return
            if best[0] <= NEW_LANDMARK_FACTOR * gate:
                # Ambiguous: too far to fuse, too close to duplicate.
                return
        if meas.door_segment is None:
            return
        position_map = pose.to_map3(meas.position)
        point_key = self.graph.add_point(position_map)
        self.graph.add_sign_factor(pose_key, point_key, meas)
        lid = self.map.add_door_sign(
            position=position_map, text=meas.text,
            door_segment=np.asarray(meas.door_segment, dtype=float),
        )
        self._sign_vars[lid] = point_key

    # -- map sync ------------------------------------------------------------

    def _sync_map(self) -> None:
        for lid, key in self._plane_vars.items():
            params = canonicalize_plane(self.graph.plane(key))
            landmark = self.map.get(lid)
            if np.allclose(params.as_vector(), landmark.params.as_vector(), atol=1e-12):
                continue
            self.map.replace(reproject_hull(landmark, params))
        for lid, key in self._sign_vars.items():
            point = self.graph.point(key)
            landmark = self.map.get(lid)
            if not np.allclose(point, landmark.position, atol=1e-12):
                landmark.position = point.copy()
                self.map.version += 1

    def _refresh_marginals(self) -> None:
        keys = [self._keyframes[-1]] + self._candidate_vars()
        try:
            cov = self.graph.joint_marginal(keys)
        except Exception:
            self._marginal_cache = None
            return
        self._marginal_cache = (keys, cov)
        self._pose_cov = cov[:3, :3].copy()

    @property
    def pose_covariance(self) -> np.ndarray:
        return self._pose_cov
