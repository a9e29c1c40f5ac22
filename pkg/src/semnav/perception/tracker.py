"""Constant-velocity Kalman tracks over fused person detections.

One updater owns the tracker; `tracks` hands out deep-copied snapshots so
planners can never mutate filter state.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .features import DEFAULT_CONFIG, PerceptionConfig

_H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


@dataclass
class PersonTrack:
    id: int
    state: np.ndarray           # (x, y, vx, vy), map frame
    cov: np.ndarray             # 4x4 SPD
    last_update: float          # seconds, time the state refers to
    misses: int = 0


def _transition(dt: float, sigma_a: float) -> tuple[np.ndarray, np.ndarray]:
    f = np.eye(4)
    f[0, 2] = f[1, 3] = dt
    q1 = np.array([[dt**4 / 4.0, dt**3 / 2.0], [dt**3 / 2.0, dt**2]]) * sigma_a**2
    q = np.zeros((4, 4))
    q[np.ix_([0, 2], [0, 2])] = q1
    q[np.ix_([1, 3], [1, 3])] = q1
    return f, q


def _clamp_speed(state: np.ndarray, max_speed: float) -> np.ndarray:
    speed = float(np.hypot(state[2], state[3]))
    if speed > max_speed:
        state = state.copy()
        state[2:] *= max_speed / speed
    return state


def kf_predict(track: PersonTrack, dt: float,
               config: PerceptionConfig = DEFAULT_CONFIG) -> PersonTrack:
    if dt <= 0.0:
        raise ValueError("prediction step must be positive")
    f, q = _transition(dt, config.sigma_a)
    return PersonTrack(
        id=track.id,
        state=f @ track.state,
        cov=f @ track.cov @ f.T + q,
        last_update=track.last_update + dt,
        misses=track.misses,
    )


def kf_update(track: PersonTrack, detection: np.ndarray, noise: np.ndarray,
              config: PerceptionConfig = DEFAULT_CONFIG) -> PersonTrack:
    z = np.asarray(detection, dtype=float)
    r = np.asarray(noise, dtype=float)
    p = track.cov
    s = _H @ p @ _H.T + r
    k = np.linalg.solve(s.T, (_H @ p.T)).T
    state = track.state + k @ (z - _H @ track.state)
    ikh = np.eye(4) - k @ _H
    cov = ikh @ p @ ikh.T + k @ r @ k.T     # Joseph form keeps SPD
    cov = 0.5 * (cov + cov.T)
    return PersonTrack(
        id=track.id,
        state=_clamp_speed(state, config.max_speed),
        cov=cov,
        last_update=track.last_update,
        misses=0,
    )


@dataclass
class _Candidate:
    position: np.ndarray
    first_position: np.ndarray
    first_t: float
    last_t: float
    count: int = 1
    continued: bool = True


class PersonTracker:
    """Greedy nearest-neighbor association with spawn/miss bookkeeping."""

    def __init__(self, config: PerceptionConfig = DEFAULT_CONFIG) -> None:
        self.config = config
        self._tracks: list[PersonTrack] = []
        self._candidates: list[_Candidate] = []
        self._next_id = 1

    @property
    def tracks(self) -> list[PersonTrack]:
        return [copy.deepcopy(t) for t in sorted(self._tracks, key=lambda t: t.id)]

    def associate_and_manage(self, detections: list[np.ndarray], t: float) -> list[PersonTrack]:
        """Advance all tracks to time t against this frame's detections."""
        cfg = self.config
        dets = [np.asarray(d, dtype=float).reshape(2) for d in detections]

        predicted = []
        for track in self._tracks:
            dt = t - track.last_update
            predicted.append(kf_predict(track, dt, cfg) if dt > 0.0 else track)

        unmatched = set(range(len(dets)))
        matched: dict[int, int] = {}
        while predicted:
            best = None
            for ti, track in enumerate(predicted):
                if ti in matched:
                    continue
                for di in unmatched:
                    d = float(np.linalg.norm(track.state[:2] - dets[di]))
                    if d <= cfg.gate and (best is None or d < best[0]):
                        best = (d, ti, di)
            if best is None:
                break
            _, ti, di = best
            matched[ti] = di
            unmatched.discard(di)

        survivors = []
        for ti, track in enumerate(predicted):
            if ti in matched:
                noise = np.eye(2) * cfg.detection_sigma**2
                survivors.append(kf_update(track, dets[matched[ti]], noise, cfg))
            else:
                track.misses += 1
                if track.misses <= cfg.max_misses:
                    survivors.append(track)
        self._tracks = survivors

        self._advance_candidates(dets, unmatched, t)
        return self.tracks

    def _advance_candidates(self, dets, unmatched: set[int], t: float) -> None:
        cfg = self.config
        for cand in self._candidates:
            cand.continued = False
        for cand in sorted(self._candidates, key=lambda c: -c.count):
            best = None
            for di in unmatched:
                d = float(np.linalg.norm(cand.position - dets[di]))
                if d <= cfg.gate and (best is None or d < best[0]):
                    best = (d, di)
            if best is None:
                continue
            _, di = best
            unmatched.discard(di)
            cand.position = dets[di]
            cand.last_t = t
            cand.count += 1
            cand.continued = True

        spawned = []
        kept = []
        for cand in self._candidates:
            if not cand.continued:
                continue
            if cand.count >= cfg.spawn_frames:
                spawned.append(cand)
            else:
                kept.append(cand)
        for cand in spawned:
            span = cand.last_t - cand.first_t
            vel = (cand.position - cand.first_position) / span if span > 0.0 else np.zeros(2)
            speed = float(np.hypot(*vel))
            if speed > cfg.max_speed:
                vel *= cfg.max_speed / speed
            self._tracks.append(PersonTrack(
                id=self._next_id,
                state=np.concatenate([cand.position, vel]),
                cov=np.diag([cfg.detection_sigma**2, cfg.detection_sigma**2, 1.0, 1.0]),
                last_update=t,
            ))
            self._next_id += 1
        self._candidates = kept
        for di in unmatched:
            self._candidates.append(_Candidate(
                position=dets[di], first_position=dets[di], first_t=t, last_t=t,
            ))
