"""Queryable store of semantic landmarks: planes, objects and door signs.

Labels are free text, matched case-insensitively and exactly. Persistence
is a versioned JSON document; loading is strict and reports parse
diagnostics instead of guessing.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np

from .geometry import (
    DegenerateInput,
    PlaneParams,
    Polygon3,
    canonicalize_plane,
    convex_hull_2d,
    point_polygon_distance_2d,
    point_segment_distance,
)

LandmarkId = int


class UnknownId(KeyError):
    pass


class ParseError(ValueError):
    pass


@dataclass
class PlaneLandmark:
    id: LandmarkId
    params: PlaneParams
    hull: Polygon3
    label: Optional[str] = None

    @property
    def orientation_class(self) -> str:
        nz = abs(self.params.n[2])
        if nz < 0.1:
            return "vertical"
        if nz > 0.9:
            return "horizontal"
        return "other"

    def floor_polygon(self) -> np.ndarray:
        return self.hull.floor_vertices()


@dataclass
class ObjectLandmark:
    id: LandmarkId
    centroid: np.ndarray  # (3,)
    footprint_radius: float
    label: Optional[str] = None
    descriptor: bytes = b""

    def __post_init__(self) -> None:
        self.centroid = np.asarray(self.centroid, dtype=float).reshape(3)
        if self.footprint_radius <= 0:
            raise ValueError("footprint_radius must be positive")


@dataclass
class DoorSignLandmark:
    id: LandmarkId
    position: np.ndarray  # (3,)
    text: str
    door_segment: np.ndarray  # (2, 2) endpoints on the floor
    label: Optional[str] = None

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.door_segment = np.asarray(self.door_segment, dtype=float).reshape(2, 2)
        if not self.text:
            raise ValueError("sign text must be non-empty")
        length = float(np.linalg.norm(self.door_segment[1] - self.door_segment[0]))
        if not 0.6 <= length <= 1.6:
            raise ValueError(f"door segment length {length:.2f} outside [0.6, 1.6] m")


Landmark = Union[PlaneLandmark, ObjectLandmark, DoorSignLandmark]


def _floor_distance(p: np.ndarray, lm: Landmark) -> float:
    """Distance from a floor point to a landmark's floor-projected extent."""
    p = np.asarray(p, dtype=float)[:2]
    if isinstance(lm, PlaneLandmark):
        flat = lm.floor_polygon()
        try:
            return point_polygon_distance_2d(p, convex_hull_2d(flat))
        except DegenerateInput:
            # Vertical-plane hulls project to a segment on the floor.
            order = np.lexsort((flat[:, 1], flat[:, 0]))
            return point_segment_distance(p, flat[order[0]], flat[order[-1]])
    if isinstance(lm, ObjectLandmark):
        return float(np.linalg.norm(p - lm.centroid[:2]))
    return float(np.linalg.norm(p - lm.position[:2]))


class SemanticMap:
    """Landmarks by id plus a case-folded label index.

    Single-writer semantics: every mutation bumps ``version``; ``snapshot``
    hands readers an independent copy.
    """

    def __init__(self) -> None:
        self._landmarks: dict[LandmarkId, Landmark] = {}
        self._label_index: dict[str, set[LandmarkId]] = {}
        self._next_id: LandmarkId = 1
        self.version: int = 0

    def __len__(self) -> int:
        return len(self._landmarks)

    def __iter__(self) -> Iterator[Landmark]:
        return iter(self._landmarks.values())

    def get(self, lid: LandmarkId) -> Landmark:
        try:
            return self._landmarks[lid]
        except KeyError:
            raise UnknownId(lid) from None

    def allocate_id(self) -> LandmarkId:
        lid = self._next_id
        self._next_id += 1
        return lid

    def add(self, lm: Landmark) -> LandmarkId:
        if lm.id in self._landmarks:
            raise ValueError(f"landmark id {lm.id} already present")
        self._landmarks[lm.id] = lm
        self._next_id = max(self._next_id, lm.id + 1)
        if lm.label:
            self._label_index.setdefault(lm.label.casefold(), set()).add(lm.id)
        self.version += 1
        return lm.id

    def replace(self, lm: Landmark) -> None:
        """Swap in an updated landmark with the same id, keeping the label index."""
        old = self.get(lm.id)
        if (old.label or None) != (lm.label or None):
            raise ValueError("replace cannot change labels; use apply_label")
        self._landmarks[lm.id] = lm
        self.version += 1

    def add_plane(self, params: PlaneParams, hull: Polygon3, label: Optional[str] = None) -> LandmarkId:
        return self.add(PlaneLandmark(self.allocate_id(), canonicalize_plane(params), hull, label))

    def add_object(
        self, centroid, footprint_radius: float, label: Optional[str] = None, descriptor: bytes = b""
    ) -> LandmarkId:
        return self.add(ObjectLandmark(self.allocate_id(), centroid, footprint_radius, label, descriptor))

    def add_door_sign(self, position, text: str, door_segment, label: Optional[str] = None) -> LandmarkId:
        return self.add(DoorSignLandmark(self.allocate_id(), position, text, door_segment, label))

    def apply_label(self, lid: LandmarkId, label: str) -> None:
        lm = self.get(lid)
        if lm.label:
            old = self._label_index.get(lm.label.casefold())
            if old:
                old.discard(lid)
                if not old:
                    del self._label_index[lm.label.casefold()]
        lm.label = label
        self._label_index.setdefault(label.casefold(), set()).add(lid)
        self.version += 1

    def query_by_label(self, label: str) -> list[Landmark]:
        ids = self._label_index.get(label.casefold(), set())
        return [self._landmarks[i] for i in sorted(ids)]

    def labels(self) -> list[str]:
        seen = {}
        for lm in self._landmarks.values():
            if lm.label:
                seen.setdefault(lm.label.casefold(), lm.label)
        return sorted(seen.values(), key=str.casefold)

    def nearest_unlabeled_landmark(self, p, r: float):
        """Closest unlabeled plane or object within radius r of floor point p.

        Door signs are excluded: they are born carrying their text. Returns
        (landmark id, distance) or None. Distances are measured to the
        floor-projected hull (planes) or centroid (objects).
        """
        if r <= 0:
            raise ValueError("radius must be positive")
        best = None
        for lm in self._landmarks.values():
            if lm.label or isinstance(lm, DoorSignLandmark):
                continue
            dist = _floor_distance(p, lm)
            if dist <= r and (best is None or dist < best[1]):
                best = (lm.id, dist)
        return best

    def snapshot(self) -> "SemanticMap":
        return loads(dumps(self))

    def door_signs(self) -> list[DoorSignLandmark]:
        return [lm for lm in self._landmarks.values() if isinstance(lm, DoorSignLandmark)]


def _encode_landmark(lm: Landmark) -> dict:
    if isinstance(lm, PlaneLandmark):
        return {
            "kind": "plane",
            "id": lm.id,
            "n": [float(c) for c in lm.params.n],
            "d": float(lm.params.d),
            "hull": [[float(c) for c in v] for v in lm.hull.vertices],
            "label": lm.label,
        }
    if isinstance(lm, ObjectLandmark):
        return {
            "kind": "object",
            "id": lm.id,
            "centroid": [float(c) for c in lm.centroid],
            "footprint_radius": float(lm.footprint_radius),
            "label": lm.label,
            "descriptor": base64.b64encode(lm.descriptor).decode("ascii"),
        }
    return {
        "kind": "door_sign",
        "id": lm.id,
        "position": [float(c) for c in lm.position],
        "text": lm.text,
        "door_segment": [[float(c) for c in v] for v in lm.door_segment],
        "label": lm.label,
    }


def _decode_landmark(rec: dict, idx: int) -> Landmark:
    try:
        kind = rec["kind"]
        if kind == "plane":
            return PlaneLandmark(
                int(rec["id"]),
                PlaneParams(np.array(rec["n"], dtype=float), float(rec["d"])),
                Polygon3(np.array(rec["hull"], dtype=float)),
                rec.get("label"),
            )
        if kind == "object":
            return ObjectLandmark(
                int(rec["id"]),
                np.array(rec["centroid"], dtype=float),
                float(rec["footprint_radius"]),
                rec.get("label"),
                base64.b64decode(rec.get("descriptor", "")),
            )
        if kind == "door_sign":
            return DoorSignLandmark(
                int(rec["id"]),
                np.array(rec["position"], dtype=float),
                rec["text"],
                np.array(rec["door_segment"], dtype=float),
                rec.get("label"),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"landmark {idx}: {exc}") from exc
    raise ParseError(f"landmark {idx}: unknown kind {rec.get('kind')!r}")


def dumps(m: SemanticMap) -> bytes:
    doc = {"version": 1, "landmarks": [_encode_landmark(lm) for lm in m]}
    return json.dumps(doc, indent=1).encode("utf-8")


def loads(data: bytes) -> SemanticMap:
    try:
        doc = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(f"not utf-8 at byte {exc.start}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise ParseError(f"unsupported map version {doc.get('version') if isinstance(doc, dict) else doc!r}")
    m = SemanticMap()
    for idx, rec in enumerate(doc.get("landmarks", [])):
        m.add(_decode_landmark(rec, idx))
    m.version = 0
    return m


def save(m: SemanticMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(m))


def load(path) -> SemanticMap:
    with open(path, "rb") as fh:
        return loads(fh.read())
