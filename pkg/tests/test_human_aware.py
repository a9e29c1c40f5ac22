"""Cost-layer construction, socially-aware global planning, and the local
velocity tracker.

Derived behaviors are pinned to independent oracles: an exhaustive Dijkstra
for the grid search, a closure computation for group merging, and a plain
nested-loop enumerator for the velocity sampler.
"""
import heapq
import json
import math
from pathlib import Path

import numpy as np
import pytest
from numpy.random import default_rng

from semnav.geometry import Pose2
from semnav.planning import (
    CostGrid,
    FREE,
    HumanPose,
    NoPath,
    OCCUPIED,
    PlannedPath,
    PlannerConfig,
    RobotConfig,
    build_cost_layers,
    detect_groups,
    dwa_local,
    facing_factor,
    load_planner_config,
    occupancy_from_world,
    path_costs,
    plan_static,
    refine_dynamic,
    weighted_cost,
)
from semnav.scan import LaserScan
from semnav.world.model import load_scenario

CFG = PlannerConfig()

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def blank_grid(width, height, res=0.1, origin=Pose2()):
    return CostGrid(
        resolution=res,
        origin=origin,
        width=width,
        height=height,
        occupancy=np.full((height, width), FREE, dtype=np.uint8),
        safety=np.zeros((height, width)),
        disturbance=np.zeros((height, width)),
    )


def hp(x, y, theta):
    return HumanPose(position=np.array([x, y], dtype=float), orientation=theta)


def empty_scan():
    n = 31
    return LaserScan(
        stamp=0.0,
        pose=Pose2(),
        angle_min=-math.pi / 2,
        angle_increment=math.pi / (n - 1),
        ranges=np.full(n, np.inf),
    )


def scan_of_points(points, pose=Pose2()):
    """Scan whose map-frame hit points are exactly the given points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    local = np.array([pose.to_local(p) for p in pts])
    angles = np.sort(np.arctan2(local[:, 1], local[:, 0]))
    if len(angles) == 1:
        inc = 0.1
    else:
        gaps = np.diff(angles)
        inc = max(float(np.min(gaps[gaps > 1e-9])), 1e-3) if np.any(gaps > 1e-9) else 0.1
    lo = float(angles[0])
    n = int(round((angles[-1] - lo) / inc)) + 1
    ranges = np.full(n, np.inf)
    for p in local:
        a = math.atan2(p[1], p[0])
        i = int(round((a - lo) / inc))
        i = min(max(i, 0), n - 1)
        ranges[i] = math.hypot(p[0], p[1])
    return LaserScan(stamp=0.0, pose=pose, angle_min=lo, angle_increment=inc, ranges=ranges)


# -- facing factor ----------------------------------------------------------


def oracle_facing(pi, ti, pj, tj):
    u = np.asarray(pj, dtype=float) - np.asarray(pi, dtype=float)
    n = np.linalg.norm(u)
    if n < 1e-12:
        return 0.0
    u = u / n
    gi = max(0.0, math.cos(ti) * u[0] + math.sin(ti) * u[1])
    gj = max(0.0, -(math.cos(tj) * u[0] + math.sin(tj) * u[1]))
    return gi * gj


class TestFacingFactor:
    def test_mutual_facing_is_one(self):
        assert facing_factor(hp(0, 0, 0.0), hp(2, 0, math.pi)) == pytest.approx(1.0)

    def test_back_to_back_is_zero(self):
        assert facing_factor(hp(0, 0, math.pi), hp(2, 0, 0.0)) == 0.0

    def test_perpendicular_is_zero(self):
        assert facing_factor(hp(0, 0, math.pi / 2), hp(2, 0, math.pi / 2)) == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_and_matches_reference(self):
        rng = default_rng(5)
        for _ in range(30):
            a = hp(*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi))
            b = hp(*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi))
            f = facing_factor(a, b)
            assert f == pytest.approx(facing_factor(b, a), abs=1e-12)
            assert f == pytest.approx(
                oracle_facing(a.position, a.orientation, b.position, b.orientation), abs=1e-12
            )
            assert 0.0 <= f <= 1.0


# -- cost layers -------------------------------------------------------------


class TestCostLayers:
    def test_no_humans_all_zero(self):
        grid = build_cost_layers(blank_grid(30, 20), [])
        assert not grid.safety.any()
        assert not grid.disturbance.any()

    def test_single_human_gaussian(self):
        # (2.05, 1.05) is a cell center at 0.1 resolution
        grid = build_cost_layers(blank_grid(60, 40), [hp(2.05, 1.05, 0.0)])
        iy, ix = 10, 20
        assert grid.safety[iy, ix] == pytest.approx(1.0)
        # one sigma away along x
        val = grid.safety[iy, ix + 5]  # 0.5 m, sigma = 0.45
        assert val == pytest.approx(math.exp(-0.5**2 / (2 * 0.45**2)), rel=1e-12)
        # zeroed strictly beyond the cutoff
        far = np.hypot(
            grid.cell_centers()[..., 0] - 2.05, grid.cell_centers()[..., 1] - 1.05
        )
        assert not grid.safety[far > 2.0].any()
        assert grid.safety[far <= 2.0].all()

    def test_safety_is_max_over_humans(self):
        humans = [hp(1.05, 1.05, 0.0), hp(2.05, 1.05, 0.0)]
        grid = build_cost_layers(blank_grid(40, 25), humans)
        centers = grid.cell_centers()
        expect = np.zeros(grid.safety.shape)
        for h in humans:
            d2 = ((centers - h.position) ** 2).sum(axis=-1)
            v = np.exp(-d2 / (2 * 0.45**2))
            v[np.sqrt(d2) > 2.0] = 0.0
            expect = np.maximum(expect, v)
        assert np.allclose(grid.safety, expect, atol=1e-14)

    def test_facing_pair_disturbs_midpoint(self):
        humans = [hp(1.05, 2.05, 0.0), hp(3.05, 2.05, math.pi)]
        grid = build_cost_layers(blank_grid(50, 40), humans)
        ix, iy = 20, 20  # cell center (2.05, 2.05), the midpoint
        assert grid.disturbance[iy, ix] == pytest.approx(1.0 - 2.0 / 3.0, rel=1e-12)

    def test_back_to_back_pair_no_disturbance(self):
        humans = [hp(1.05, 2.05, math.pi), hp(3.05, 2.05, 0.0)]
        grid = build_cost_layers(blank_grid(50, 40), humans)
        assert not grid.disturbance.any()

    def test_far_pair_no_disturbance(self):
        humans = [hp(0.55, 2.05, 0.0), hp(3.95, 2.05, math.pi)]  # 3.4 m apart
        grid = build_cost_layers(blank_grid(50, 40), humans)
        assert not grid.disturbance.any()

    def test_disturbance_band_width(self):
        humans = [hp(1.05, 2.05, 0.0), hp(3.05, 2.05, math.pi)]
        grid = build_cost_layers(blank_grid(50, 45), humans)
        mid_ix = 20
        # 0.35 m off the segment is inside the 0.4 m band, 0.5 m is outside
        row_in = int((2.05 + 0.35) / 0.1 - 0.5)
        row_out = int((2.05 + 0.55) / 0.1 - 0.5)
        assert grid.disturbance[row_in, mid_ix] > 0.0
        assert grid.disturbance[row_out, mid_ix] == 0.0

    def test_order_invariant(self):
        humans = [hp(1.05, 2.05, 0.0), hp(3.05, 2.05, math.pi), hp(2.0, 3.4, -math.pi / 2)]
        a = build_cost_layers(blank_grid(50, 45), humans)
        b = build_cost_layers(blank_grid(50, 45), list(reversed(humans)))
        assert np.array_equal(a.safety, b.safety)
        assert np.array_equal(a.disturbance, b.disturbance)

    def test_layers_bounded(self):
        rng = default_rng(11)
        humans = [hp(*rng.uniform(0, 4, 2), rng.uniform(-math.pi, math.pi)) for _ in range(6)]
        grid = build_cost_layers(blank_grid(45, 45), humans)
        for layer in (grid.safety, grid.disturbance):
            assert np.isfinite(layer).all()
            assert (layer >= 0.0).all() and (layer <= 1.0).all()

    def test_mismatched_layer_shapes_rejected(self):
        with pytest.raises(ValueError):
            CostGrid(
                resolution=0.1,
                origin=Pose2(),
                width=10,
                height=5,
                occupancy=np.zeros((5, 10), dtype=np.uint8),
                safety=np.zeros((5, 9)),
                disturbance=np.zeros((5, 10)),
            )


# -- group detection ---------------------------------------------------------


def oracle_groups(humans, threshold=0.2, cutoff=3.0):
    n = len(humans)
    adj = [[False] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d = np.linalg.norm(humans[i].position - humans[j].position)
            f = oracle_facing(
                humans[i].position, humans[i].orientation,
                humans[j].position, humans[j].orientation,
            )
            if d < cutoff and f > threshold:
                adj[i][j] = adj[j][i] = True
    seen, comps = set(), []
    for i in range(n):
        if i in seen:
            continue
        comp, stack = {i}, [i]
        while stack:
            k = stack.pop()
            for j in range(n):
                if adj[k][j] and j not in comp:
                    comp.add(j)
                    stack.append(j)
        seen |= comp
        if len(comp) > 1:
            comps.append(frozenset(comp))
    return set(comps)


class TestDetectGroups:
    def test_facing_pair_is_one_region(self):
        humans = [hp(1.0, 1.0, 0.0), hp(2.5, 1.0, math.pi)]
        regions = detect_groups(humans)
        assert len(regions) == 1
        r = regions[0]
        assert set(r.members) == {0, 1}
        assert r.lo == pytest.approx([0.5, 0.5])
        assert r.hi == pytest.approx([3.0, 1.5])

    def test_back_to_back_pair_no_region(self):
        humans = [hp(1.0, 1.0, math.pi), hp(2.5, 1.0, 0.0)]
        assert detect_groups(humans) == []

    def test_chain_merges_transitively(self):
        # B partially faces both A and C; A and C are too far from each other
        humans = [
            hp(1.0, 0.0, math.pi),            # A, faces B
            hp(0.0, 0.0, math.pi / 4),        # B, splits attention
            hp(0.0, 2.9, -math.pi / 2),       # C, faces B
        ]
        assert np.linalg.norm(humans[0].position - humans[2].position) > 3.0
        regions = detect_groups(humans)
        assert len(regions) == 1
        assert set(regions[0].members) == {0, 1, 2}

    def test_matches_closure_reference(self):
        rng = default_rng(23)
        for _ in range(40):
            humans = [
                hp(*rng.uniform(0, 8, 2), rng.uniform(-math.pi, math.pi))
                for _ in range(rng.integers(0, 7))
            ]
            got = {frozenset(r.members) for r in detect_groups(humans)}
            assert got == oracle_groups(humans)

    def test_region_bounds_inflated(self):
        rng = default_rng(31)
        for _ in range(20):
            humans = [hp(*rng.uniform(0, 5, 2), rng.uniform(-math.pi, math.pi)) for _ in range(5)]
            for r in detect_groups(humans):
                pts = np.array([humans[i].position for i in r.members])
                assert r.lo == pytest.approx(pts.min(axis=0) - 0.5)
                assert r.hi == pytest.approx(pts.max(axis=0) + 0.5)


# -- static planning ---------------------------------------------------------


def oracle_dijkstra(grid, start_cell, goal_cell, weights):
    """Exhaustive shortest path over the 8-connected free cells."""
    w_len, w_safe, w_dist = weights
    height, width = grid.occupancy.shape
    res = grid.resolution
    dist = {start_cell: 0.0}
    prev = {}
    heap = [(0.0, 0, start_cell)]
    count = 0
    while heap:
        d, _, cell = heapq.heappop(heap)
        if d > dist.get(cell, np.inf):
            continue
        if cell == goal_cell:
            break
        ix, iy = cell
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nx, ny = ix + dx, iy + dy
                if not (0 <= nx < width and 0 <= ny < height):
                    continue
                if grid.occupancy[ny, nx] != FREE:
                    continue
                step = res * math.sqrt(2) if dx and dy else res
                nd = d + w_len * step + w_safe * grid.safety[ny, nx] + w_dist * grid.disturbance[ny, nx]
                if nd < dist.get((nx, ny), np.inf):
                    dist[(nx, ny)] = nd
                    prev[(nx, ny)] = cell
                    count += 1
                    heapq.heappush(heap, (nd, count, (nx, ny)))
    if goal_cell not in dist:
        return None, None
    cells = [goal_cell]
    while cells[-1] != start_cell:
        cells.append(prev[cells[-1]])
    return dist[goal_cell], cells[::-1]


def canonical_cost(grid, waypoints, weights):
    """Weighted path cost accumulated with exact summation, so equal-cost
    paths found in different expansion orders compare equal."""
    w_len, w_safe, w_dist = weights
    terms = []
    for k in range(1, len(waypoints)):
        a, b = waypoints[k - 1], waypoints[k]
        terms.append(w_len * math.hypot(b[0] - a[0], b[1] - a[1]))
        ix, iy = grid.world_to_cell(b)
        terms.append(w_safe * grid.safety[iy, ix])
        terms.append(w_dist * grid.disturbance[iy, ix])
    return math.fsum(terms)


def assert_eight_adjacent(grid, waypoints):
    cells = [grid.world_to_cell(w) for w in waypoints]
    for a, b in zip(cells, cells[1:]):
        assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1, (a, b)


class TestPlanStatic:
    def test_empty_grid_diagonal(self):
        grid = blank_grid(20, 20)
        path = plan_static(grid, np.array([0.05, 0.05]), np.array([1.95, 1.95]))
        assert len(path.waypoints) == 20
        assert path.length_cost == pytest.approx(19 * math.sqrt(2) * 0.1, rel=1e-12)
        assert path.safety_cost == 0.0
        assert path.disturbance_cost == 0.0
        assert not path.refined
        assert_eight_adjacent(grid, path.waypoints)

    def test_start_equals_goal(self):
        grid = blank_grid(10, 10)
        path = plan_static(grid, np.array([0.55, 0.55]), np.array([0.55, 0.55]))
        assert len(path.waypoints) == 1
        assert path.length_cost == 0.0

    def test_no_path_raises(self):
        grid = blank_grid(20, 20)
        grid.occupancy[:, 10] = OCCUPIED
        with pytest.raises(NoPath):
            plan_static(grid, np.array([0.05, 0.05]), np.array([1.85, 1.05]))

    def test_blocked_start_rejected(self):
        grid = blank_grid(10, 10)
        grid.occupancy[0, 0] = OCCUPIED
        with pytest.raises(ValueError):
            plan_static(grid, np.array([0.05, 0.05]), np.array([0.85, 0.85]))

    def test_detours_around_human(self):
        grid = build_cost_layers(blank_grid(60, 30), [hp(3.05, 1.55, math.pi / 2)])
        start, goal = np.array([0.55, 1.55]), np.array([5.55, 1.55])
        path = plan_static(grid, start, goal)
        # must leave the straight row at some point
        assert np.ptp(path.waypoints[:, 1]) > 0.0
        straight = np.column_stack([np.arange(5, 56) * 0.1 + 0.05, np.full(51, 1.55)])
        assert canonical_cost(grid, path.waypoints, CFG.weights) <= canonical_cost(
            grid, straight, CFG.weights
        ) + 1e-12

    def test_matches_dijkstra_on_random_grids(self):
        rng = default_rng(41)
        solved = 0
        for trial in range(100):
            width = int(rng.integers(8, 51))
            height = int(rng.integers(8, 51))
            grid = blank_grid(width, height)
            blocked = rng.random((height, width)) < 0.18
            grid.occupancy[blocked] = OCCUPIED
            humans = [
                hp(
                    rng.uniform(0, width * 0.1),
                    rng.uniform(0, height * 0.1),
                    rng.uniform(-math.pi, math.pi),
                )
                for _ in range(rng.integers(0, 4))
            ]
            grid = build_cost_layers(grid, humans)
            free = np.argwhere(grid.occupancy == FREE)
            si, gi = free[rng.integers(len(free))], free[rng.integers(len(free))]
            start = grid.cell_to_world(si[1], si[0])
            goal = grid.cell_to_world(gi[1], gi[0])
            best, cells = oracle_dijkstra(
                grid, (si[1], si[0]), (gi[1], gi[0]), CFG.weights
            )
            if best is None:
                with pytest.raises(NoPath):
                    plan_static(grid, start, goal)
                continue
            path = plan_static(grid, start, goal)
            solved += 1
            if len(path.waypoints) > 1:
                assert_eight_adjacent(grid, path.waypoints)
            mine = canonical_cost(grid, path.waypoints, CFG.weights)
            ref = math.fsum(
                [
                    CFG.weights[0]
                    * (0.1 * math.sqrt(2) if (abs(a[0] - b[0]) and abs(a[1] - b[1])) else 0.1)
                    + CFG.weights[1] * grid.safety[b[1], b[0]]
                    + CFG.weights[2] * grid.disturbance[b[1], b[0]]
                    for a, b in zip(cells, cells[1:])
                ]
            )
            assert mine == pytest.approx(ref, rel=1e-12, abs=1e-12), trial
        assert solved > 60

    def test_weighted_components_reported(self):
        grid = build_cost_layers(blank_grid(40, 30), [hp(2.05, 1.55, 0.3)])
        path = plan_static(grid, np.array([0.55, 0.55]), np.array([3.55, 2.55]))
        again = path_costs(grid, path.waypoints)
        assert path.length_cost == pytest.approx(again[0], rel=1e-12)
        assert path.safety_cost == pytest.approx(again[1], rel=1e-12)
        assert path.disturbance_cost == pytest.approx(again[2], rel=1e-12)
        w = weighted_cost(path, CFG.weights)
        assert w == pytest.approx(
            CFG.weights[0] * path.length_cost
            + CFG.weights[1] * path.safety_cost
            + CFG.weights[2] * path.disturbance_cost
        )

    def test_more_safety_weight_never_shortens_detour(self):
        rng = default_rng(53)
        for _ in range(20):
            grid = blank_grid(35, 35)
            humans = [hp(1.0, 1.4, 0.0), hp(2.4, 2.6, math.pi / 3)]  # > 2 m gap in between
            grid = build_cost_layers(grid, humans)
            start = grid.cell_to_world(1, int(rng.integers(1, 34)))
            goal = grid.cell_to_world(33, int(rng.integers(1, 34)))
            lengths = []
            for w_safe in (0.0, 1.0, 3.0, 6.0, 10.0):
                path = plan_static(grid, start, goal, weights=(1.0, w_safe, 5.0))
                lengths.append(path.length_cost)
            for a, b in zip(lengths, lengths[1:]):
                assert b >= a - 1e-9


# -- route choice between corridors ------------------------------------------


def corridor_of(path, lo=3.4, hi=6.6):
    band = path.waypoints[(path.waypoints[:, 1] > 3.8) & (path.waypoints[:, 1] < 4.2)]
    assert len(band), "path never crosses the middle band"
    if (band[:, 0] < lo).all():
        return "left"
    if (band[:, 0] > hi).all():
        return "right"
    assert ((band[:, 0] >= lo) & (band[:, 0] <= hi)).all(), "path straddles corridors"
    return "center"


def plan_fixture(name):
    doc = json.loads((SCENARIOS / name).read_text())
    world = load_scenario(doc).world
    grid = occupancy_from_world(world, bounds=(0.0, 0.0, 10.0, 8.0), inflation=0.35)
    humans = [HumanPose(h.pose.translation(), h.pose.theta) for h in world.humans]
    grid = build_cost_layers(grid, humans)
    return plan_static(grid, np.array([4.6, 0.8]), np.array([4.6, 7.2]))


class TestCorridorChoice:
    def test_open_center(self):
        assert corridor_of(plan_fixture("corridors_open.json")) == "center"

    def test_group_pushes_left(self):
        assert corridor_of(plan_fixture("corridors_group.json")) == "left"

    def test_crowded_takes_longest(self):
        assert corridor_of(plan_fixture("corridors_crowded.json")) == "right"


# -- dynamic refinement -------------------------------------------------------


def straight_path(grid, x0, x1, y):
    start, goal = np.array([x0, y]), np.array([x1, y])
    return plan_static(grid, start, goal)


class TestRefineDynamic:
    def test_no_humans_identity(self):
        grid = blank_grid(70, 40)
        path = straight_path(grid, 0.55, 6.55, 2.05)
        out = refine_dynamic(path, [], Pose2(0.55, 2.05, 0.0), grid)
        assert out.refined is False
        assert np.array_equal(out.waypoints, path.waypoints)

    def test_far_group_identity(self):
        humans = [hp(3.0, 38.0, 0.0), hp(4.4, 38.0, math.pi)]
        grid = build_cost_layers(blank_grid(70, 420), humans)
        path = straight_path(grid, 0.55, 6.55, 2.05)
        out = refine_dynamic(path, humans, Pose2(0.55, 2.05, 0.0), grid)
        assert out.refined is False
        assert np.array_equal(out.waypoints, path.waypoints)

    def test_refinement_idempotent_when_untouched(self):
        humans = [hp(3.0, 38.0, 0.0), hp(4.4, 38.0, math.pi)]
        grid = build_cost_layers(blank_grid(70, 420), humans)
        path = straight_path(grid, 0.55, 6.55, 2.05)
        once = refine_dynamic(path, humans, Pose2(0.55, 2.05, 0.0), grid)
        twice = refine_dynamic(once, humans, Pose2(0.55, 2.05, 0.0), grid)
        assert twice.refined is False
        assert np.array_equal(twice.waypoints, once.waypoints)

    def test_replaces_section_through_group(self):
        # pair straddles the straight route asymmetrically
        humans = [hp(3.0, 1.55, math.pi / 2), hp(3.0, 2.65, -math.pi / 2)]
        grid = build_cost_layers(blank_grid(70, 40), humans)
        path = straight_path(grid, 0.55, 6.55, 2.05)
        out = refine_dynamic(path, humans, Pose2(0.55, 2.05, 0.0), grid)
        assert out.refined is True
        # endpoints preserved
        assert out.waypoints[0] == pytest.approx(path.waypoints[0])
        assert out.waypoints[-1] == pytest.approx(path.waypoints[-1])
        # replaced stretch actually bends away from the straight row
        deviation = np.abs(out.waypoints[:, 1] - 2.05).max()
        assert deviation > 0.05
        # refined spacing stays tight
        steps = np.linalg.norm(np.diff(out.waypoints, axis=0), axis=1)
        assert steps.max() <= 0.3 + 1e-9
        # costs recomputed for the new geometry
        l, s, d = path_costs(grid, out.waypoints)
        assert out.length_cost == pytest.approx(l, rel=1e-12)
        assert out.safety_cost == pytest.approx(s, rel=1e-12)
        assert out.disturbance_cost == pytest.approx(d, rel=1e-12)

    def test_blocked_section_falls_back_to_static(self):
        # wall straight across the section: the simulated rollout cannot
        # reach the section end and the static geometry must survive
        humans = [hp(3.0, 1.55, math.pi / 2), hp(3.0, 2.65, -math.pi / 2)]
        grid = build_cost_layers(blank_grid(70, 40), humans)
        path = straight_path(grid, 0.55, 6.55, 2.05)
        barrier = np.array([[[3.6, 0.0], [3.6, 4.0]]])
        out = refine_dynamic(path, humans, Pose2(0.55, 2.05, 0.0), grid, obstacles=barrier)
        assert out.refined is False
        assert np.array_equal(out.waypoints, path.waypoints)


# -- local velocity tracking ---------------------------------------------------


def polyline_arc(waypoints, p):
    """Arc length of the closest point on the polyline."""
    best_d, best_s = np.inf, 0.0
    s = 0.0
    for a, b in zip(waypoints, waypoints[1:]):
        ab = b - a
        L = float(np.linalg.norm(ab))
        if L < 1e-12:
            continue
        t = float(np.clip(np.dot(p - a, ab) / (L * L), 0.0, 1.0))
        close = a + t * ab
        d = float(np.linalg.norm(p - close))
        if d < best_d - 1e-15:
            best_d, best_s = d, s + t * L
        s += L
    return best_s


def point_at_arc(waypoints, s):
    run = 0.0
    for a, b in zip(waypoints, waypoints[1:]):
        L = float(np.linalg.norm(b - a))
        if run + L >= s and L > 1e-12:
            t = (s - run) / L
            return a + t * (b - a)
        run += L
    return np.asarray(waypoints[-1], dtype=float)


def oracle_dwa(waypoints, state, scan_points, cfg):
    wins = []
    v_lo = max(-cfg.v_max, state.v - cfg.accel_v * cfg.dwa_dt)
    v_hi = min(cfg.v_max, state.v + cfg.accel_v * cfg.dwa_dt)
    w_lo = max(-cfg.omega_max, state.omega - cfg.accel_omega * cfg.dwa_dt)
    w_hi = min(cfg.omega_max, state.omega + cfg.accel_omega * cfg.dwa_dt)
    s0 = polyline_arc(waypoints, np.array([state.x, state.y]))
    carrot = point_at_arc(waypoints, s0 + cfg.carrot_distance)
    best = None
    for i in range(cfg.v_samples):
        v = v_lo + (v_hi - v_lo) * i / (cfg.v_samples - 1)
        for j in range(cfg.omega_samples):
            w = w_lo + (w_hi - w_lo) * j / (cfg.omega_samples - 1)
            if abs(w) < 1e-9:
                nx = state.x + v * math.cos(state.theta) * cfg.dwa_dt
                ny = state.y + v * math.sin(state.theta) * cfg.dwa_dt
            else:
                r = v / w
                nx = state.x + r * (math.sin(state.theta + w * cfg.dwa_dt) - math.sin(state.theta))
                ny = state.y - r * (math.cos(state.theta + w * cfg.dwa_dt) - math.cos(state.theta))
            nth = state.theta + w * cfg.dwa_dt
            if len(scan_points):
                d_min = min(math.hypot(p[0] - nx, p[1] - ny) for p in scan_points)
                if d_min < cfg.radius:
                    continue
                clear = min(d_min, cfg.clearance_cap) / cfg.clearance_cap
            else:
                clear = 1.0
            prog = (polyline_arc(waypoints, np.array([nx, ny])) - s0) / (cfg.v_max * cfg.dwa_dt)
            prog = min(max(prog, -1.0), 1.0)
            to_c = carrot - np.array([nx, ny])
            if np.linalg.norm(to_c) < 1e-9:
                head = 1.0
            else:
                head = 0.5 * (1.0 + math.cos(nth - math.atan2(to_c[1], to_c[0])))
            score = (
                cfg.dwa_weights[0] * prog
                + cfg.dwa_weights[1] * clear
                + cfg.dwa_weights[2] * head
            )
            if best is None or score > best[0] + 1e-15:
                best = (score, v, w)
    return best


class TestDwaLocal:
    def path_along_x(self, y=1.0, x0=0.0, x1=6.0):
        xs = np.arange(x0, x1 + 1e-9, 0.1)
        wp = np.column_stack([xs, np.full(len(xs), y)])
        return PlannedPath(
            waypoints=wp, length_cost=x1 - x0, safety_cost=0.0,
            disturbance_cost=0.0, refined=False,
        )

    def test_clear_path_drives_forward(self):
        path = self.path_along_x()
        state = RobotConfig(1.0, 1.0, 0.0, 0.5, 0.0)
        v, w = dwa_local(path, state, empty_scan())
        assert v > 0.5
        assert abs(w) < 0.2

    def test_blocked_ahead_returns_zero(self):
        path = self.path_along_x()
        wall = [(1.45, 1.0 + dy) for dy in np.linspace(-0.6, 0.6, 13)]
        scan = scan_of_points(wall, pose=Pose2(1.0, 1.0, 0.0))
        state = RobotConfig(1.0, 1.0, 0.0, 0.4, 0.0)
        v, w = dwa_local(path, state, scan)
        assert v == 0.0 and w == 0.0

    def test_matches_enumeration(self):
        rng = default_rng(71)
        for trial in range(40):
            n = int(rng.integers(3, 8))
            wp = np.cumsum(rng.uniform(-0.6, 1.0, (n, 2)), axis=0) + np.array([2.0, 2.0])
            path = PlannedPath(
                waypoints=wp, length_cost=0.0, safety_cost=0.0,
                disturbance_cost=0.0, refined=False,
            )
            near = wp[0] + rng.normal(0, 0.4, 2)
            state = RobotConfig(
                near[0], near[1], rng.uniform(-math.pi, math.pi),
                rng.uniform(-0.9, 0.9), rng.uniform(-1.2, 1.2),
            )
            pts = rng.uniform(0, 6, (int(rng.integers(0, 10)), 2))
            pts = pts[np.hypot(pts[:, 0] - state.x, pts[:, 1] - state.y) > 0.5]
            scan = scan_of_points(pts, pose=Pose2(state.x, state.y, state.theta)) if len(pts) else empty_scan()
            ref = oracle_dwa(wp, state, scan.points_map(), CFG)
            got = dwa_local(path, state, scan)
            if ref is None:
                assert got == (0.0, 0.0)
            else:
                assert got[0] == pytest.approx(ref[1], abs=1e-9), trial
                assert got[1] == pytest.approx(ref[2], abs=1e-9), trial

    def test_near_goal_keeps_heading_term_defined(self):
        path = self.path_along_x(x0=0.0, x1=1.2)
        state = RobotConfig(1.15, 1.0, 0.0, 0.2, 0.0)
        v, w = dwa_local(path, state, empty_scan())
        assert math.isfinite(v) and math.isfinite(w)


# -- config loading ------------------------------------------------------------


class TestPlannerConfig:
    def test_defaults(self):
        cfg = PlannerConfig()
        assert cfg.sigma_safety == 0.45
        assert cfg.weights == (1.0, 3.0, 5.0)
        assert cfg.pair_cutoff == 3.0

    def test_round_trip_from_json(self, tmp_path):
        doc = {"weights": [1.0, 4.0, 5.0], "sigma_safety": 0.5, "carrot_distance": 1.0}
        p = tmp_path / "planner.json"
        p.write_text(json.dumps(doc))
        cfg = load_planner_config(p)
        assert cfg.weights == (1.0, 4.0, 5.0)
        assert cfg.sigma_safety == 0.5
        assert cfg.carrot_distance == 1.0
        assert cfg.pair_cutoff == 3.0

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            load_planner_config({"sigma_safty": 0.5})


# -- occupancy rasterization ---------------------------------------------------


class TestOccupancyFromWorld:
    def test_walls_inflate(self):
        doc = {
            "name": "box",
            "walls": [{"a": [0.0, 1.0], "b": [4.0, 1.0]}],
            "robot": {"pose": [2.0, 3.0, 0.0]},
        }
        world = load_scenario(doc).world
        grid = occupancy_from_world(world, bounds=(0.0, 0.0, 4.0, 4.0), inflation=0.35)
        assert grid.occupancy[grid.world_to_cell(np.array([2.0, 1.0]))[::-1]] == OCCUPIED
        ix, iy = grid.world_to_cell(np.array([2.0, 1.25]))
        assert grid.occupancy[iy, ix] == OCCUPIED
        ix, iy = grid.world_to_cell(np.array([2.0, 1.55]))
        assert grid.occupancy[iy, ix] == FREE

    def test_free_space_plannable(self):
        doc = {
            "name": "box",
            "walls": [{"a": [2.0, 0.0], "b": [2.0, 3.0]}],
            "robot": {"pose": [0.5, 3.5, 0.0]},
        }
        world = load_scenario(doc).world
        grid = occupancy_from_world(world, bounds=(0.0, 0.0, 4.0, 4.0), inflation=0.35)
        path = plan_static(grid, np.array([0.55, 0.55]), np.array([3.55, 0.55]))
        # must route over the top of the wall
        assert path.waypoints[:, 1].max() > 3.3
