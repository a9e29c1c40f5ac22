"""Fused leg/torso person detection against simulated scans."""
import math

import numpy as np

from semnav.geometry import Pose2
from semnav.perception import PerceptionConfig, detect_people, segment_scan
from semnav.world.model import load_scenario
from semnav.world.sensors import simulate_laser

CFG = PerceptionConfig()


def make_world(humans=(), tables=(), walls=()):
    doc = {
        "version": 1,
        "name": "fixture",
        "walls": [{"a": list(a), "b": list(b)} for a, b in walls],
        "tables": list(tables),
        "doors": [],
        "signs": [],
        "humans": list(humans),
        "robot": {"pose": [0.0, 0.0, 0.0]},
        "events": [],
    }
    return load_scenario(doc).world


def scan_segments(world, pose=Pose2(), seed=None):
    segs = []
    for height in ("ankle", "torso"):
        rng = None if seed is None else np.random.default_rng([seed, hash(height) % 1000])
        sigma = 0.01 if seed is not None else 0.0
        scan = simulate_laser(world, pose, height, rng=rng, noise_sigma=sigma)
        segs.extend(segment_scan(scan))
    return segs


class TestFusedDetector:
    def test_leg_pair_detected_without_torso(self):
        world = make_world(humans=[{"id": "a", "pose": [1.5, 0.0, 0.0], "mode": "operator"}])
        scan = simulate_laser(world, Pose2(), "ankle", rng=None, noise_sigma=0.0)
        dets = detect_people(segment_scan(scan))
        assert len(dets) == 1
        assert dets[0].kind == "legs"
        assert np.linalg.norm(dets[0].position - np.array([1.5, 0.0])) < 0.12

    def test_torso_overrides_leg_pair(self):
        world = make_world(humans=[{"id": "a", "pose": [1.5, 0.0, math.pi / 2], "mode": "operator"}])
        dets = detect_people(scan_segments(world))
        assert len(dets) == 1
        assert dets[0].kind == "torso"
        assert np.linalg.norm(dets[0].position - np.array([1.5, 0.0])) < 0.1

    def test_single_leg_is_not_a_person(self):
        world = make_world(humans=[{"id": "a", "pose": [1.5, 0.0, 0.0], "mode": "operator"}])
        scan = simulate_laser(world, Pose2(), "ankle", rng=None, noise_sigma=0.0)
        segs = segment_scan(scan)
        assert len(segs) == 2
        assert detect_people(segs[:1]) == []

    def test_table_legs_do_not_pair(self):
        world = make_world(tables=[{"center": [2.0, 0.0], "size": [1.2, 0.8], "yaw": 0.0}])
        dets = detect_people(scan_segments(world, seed=4))
        assert dets == []

    def test_two_people_two_detections(self):
        world = make_world(humans=[
            {"id": "a", "pose": [1.8, -0.6, 0.0], "mode": "operator"},
            {"id": "b", "pose": [1.8, 0.6, 0.0], "mode": "operator"},
        ])
        dets = detect_people(scan_segments(world, seed=1))
        assert len(dets) == 2
        ys = sorted(float(d.position[1]) for d in dets)
        assert abs(ys[0] + 0.6) < 0.2 and abs(ys[1] - 0.6) < 0.2

    def test_detection_noise_is_spd(self):
        world = make_world(humans=[{"id": "a", "pose": [1.5, 0.0, 0.0], "mode": "operator"}])
        dets = detect_people(scan_segments(world, seed=2))
        for d in dets:
            assert np.all(np.linalg.eigvalsh(d.noise) > 0.0)


class TestRecallPrecision:
    def sample_scene(self, rng):
        walls = [
            ((-1.0, -4.0), (5.0, -4.0)),
            ((5.0, -4.0), (5.0, 4.0)),
            ((5.0, 4.0), (-1.0, 4.0)),
            ((-1.0, 4.0), (-1.0, -4.0)),
        ]
        n = int(rng.integers(1, 4))
        placed = []
        guard = 0
        while len(placed) < n and guard < 200:
            guard += 1
            bearing = rng.uniform(-1.4, 1.4)
            rang = rng.uniform(1.0, 3.2)
            p = np.array([rang * math.cos(bearing), rang * math.sin(bearing)])
            if not (-0.5 < p[0] < 4.5 and -3.5 < p[1] < 3.5):
                continue
            if any(np.linalg.norm(p - q[:2]) < 0.9 for q in placed):
                continue
            if any(abs(bearing - q[2]) < 0.35 for q in placed):
                continue  # keep people angularly separated: no mutual occlusion
            placed.append(np.array([p[0], p[1], bearing]))
        humans = [
            {
                "id": f"h{i}",
                "pose": [float(p[0]), float(p[1]), float(rng.uniform(-math.pi, math.pi))],
                "mode": "operator",
            }
            for i, p in enumerate(placed)
        ]
        tables = []
        if rng.uniform() < 0.4:
            tables.append({"center": [3.8, -3.0], "size": [1.2, 0.7], "yaw": 0.3})
        return make_world(humans=humans, tables=tables, walls=walls), [p[:2] for p in placed]

    def test_recall_and_false_positives(self):
        hits = 0
        total = 0
        false_pos = 0
        for seed in range(100):
            rng = np.random.default_rng([31, seed])
            world, truths = self.sample_scene(rng)
            dets = detect_people(scan_segments(world, seed=seed))
            total += len(truths)
            for truth in truths:
                if any(np.linalg.norm(d.position - truth) < 0.35 for d in dets):
                    hits += 1
            for d in dets:
                if all(np.linalg.norm(d.position - t) >= 0.5 for t in truths):
                    false_pos += 1
        recall = hits / total
        assert recall >= 0.9, f"recall {recall:.3f} over {total} people"
        assert false_pos / 100 <= 0.2, f"{false_pos} false positives in 100 scans"
