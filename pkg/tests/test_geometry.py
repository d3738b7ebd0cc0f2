import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, Polygon

from ecpr.engine import urban_buildings
from ecpr.geometry import (BuildingSet, GeometryError, LinkClass, ObstructionResult, as_ring,
                           classify_all, classify_link, is_simple, lonlat_to_local,
                           point_in_polygon, segment_intersects_polygon, segments_intersect)

UNIT = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)


def test_bbox_rejection():
    assert not segment_intersects_polygon((2, 2), (3, 3), UNIT)


def test_inside_to_outside_crosses():
    assert segment_intersects_polygon((0.5, 0.5), (3, 0.5), UNIT)


def test_fully_inside_counts():
    assert segment_intersects_polygon((0.2, 0.2), (0.8, 0.8), UNIT)


def test_degenerate_segment_raises():
    with pytest.raises(GeometryError):
        segment_intersects_polygon((0.5, 0.5), (0.5, 0.5), UNIT)


def test_touching_is_intersection():
    assert segments_intersect((0, 0), (1, 0), (1, 0), (2, 1))
    assert segments_intersect((0, 0), (2, 0), (1, 0), (1, 1))
    assert not segments_intersect((0, 0), (1, 0), (0, 1), (1, 1))
    assert segments_intersect((0, 0), (2, 0), (1, 0), (3, 0))  # collinear overlap


def test_point_in_polygon():
    assert point_in_polygon((0.5, 0.5), UNIT)
    assert not point_in_polygon((1.5, 0.5), UNIT)


def test_as_ring_and_simple():
    assert len(as_ring([(0, 0), (1, 0), (1, 1), (0, 0)])) == 3
    with pytest.raises(GeometryError):
        as_ring([(0, 0), (1, 1)])
    bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], float)
    assert not is_simple(bowtie)
    assert is_simple(UNIT)


def _convex(rng):
    c = rng.uniform(-5, 5, 2)
    k = rng.integers(3, 9)
    ang = np.sort(rng.uniform(0, 2 * math.pi, k))
    r = rng.uniform(0.5, 3)
    return c + r * np.column_stack([np.cos(ang), np.sin(ang)])


def test_random_segments_match_shapely():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        poly = _convex(rng)
        a, b = rng.uniform(-10, 10, 2), rng.uniform(-10, 10, 2)
        want = LineString([a, b]).intersects(Polygon(poly))
        assert segment_intersects_polygon(a, b, poly) == want


def test_obstruction_result_invariant():
    with pytest.raises(ValueError):
        ObstructionResult(LinkClass.LOS, 2)
    with pytest.raises(ValueError):
        ObstructionResult(LinkClass.NLOS_building, 0)


def test_no_buildings_los(veh):
    assert classify_link(veh(0, 0, 0), veh(1, 50, 0), None, []).link_class == LinkClass.LOS


def test_middle_vehicle_blocks(veh):
    res = classify_link(veh(0, 0, 0), veh(2, 50, 0), BuildingSet([]), [veh(1, 25, 0)])
    assert res.link_class == LinkClass.NLOS_vehicle and res.blocker_count == 1


def _intersection_block():
    # four blocks around a crossing at the origin, streets 20 m wide
    return BuildingSet([[(10, 10), (60, 10), (60, 60), (10, 60)],
                        [(-60, 10), (-10, 10), (-10, 60), (-60, 60)],
                        [(-60, -60), (-10, -60), (-10, -10), (-60, -10)],
                        [(10, -60), (60, -60), (60, -10), (10, -10)]])


def test_perpendicular_streets_blocked_until_center(veh):
    bs = _intersection_block()
    # one vehicle heading north on the vertical street, one east on the horizontal
    for d in (50, 40, 30):
        res = classify_link(veh(0, 0, -d), veh(1, d, 0), bs, [])
        # the segment from (0,-d) to (d,0) cuts the south-east block corner
        assert res.link_class == LinkClass.NLOS_building
    assert classify_link(veh(0, 0, -5), veh(1, 5, 0), bs, []).link_class == LinkClass.LOS


def test_fig1_segment_crosses_corner_polygon():
    corner = Polygon([(10, -60), (60, -60), (60, -10), (10, -10)])
    assert LineString([(0, -50), (50, 0)]).intersects(corner)


def test_symmetry_and_index_vs_exhaustive(veh):
    bs = urban_buildings(600, 100, 20)
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 600, (120, 2))
    vs = [veh(i, *p) for i, p in enumerate(pts)]
    for _ in range(400):
        i, j = rng.choice(len(vs), 2, replace=False)
        a = classify_link(vs[i], vs[j], bs, vs)
        b = classify_link(vs[j], vs[i], bs, vs)
        c = classify_link(vs[i], vs[j], bs, vs, exhaustive=True)
        assert a == b == c


def test_compiled_matches_reference(veh):
    bs = urban_buildings(500, 125, 20)
    rng = np.random.default_rng(8)
    pts = rng.uniform(0, 500, (80, 2))
    active = np.ones(80, bool)
    active[[3, 17]] = False
    m = classify_all(pts, active, bs, 2.5)
    assert (m == m.T).all()
    vs = [veh(i, *p) for i, p in enumerate(pts) if active[i]]
    for i in range(80):
        for j in range(80):
            if i == j or not (active[i] and active[j]):
                assert m[i, j] == -1
            elif i < j:
                assert m[i, j] == classify_link(veh(i, *pts[i]), veh(j, *pts[j]), bs, vs).link_class


def test_worker_count_does_not_matter():
    bs = urban_buildings(500, 125, 20)
    pts = np.random.default_rng(2).uniform(0, 500, (150, 2))
    act = np.ones(150, bool)
    assert (classify_all(pts, act, bs, 2.5, workers=1) == classify_all(pts, act, bs, 2.5, workers=3)).all()


def test_horizon_prunes():
    pts = np.array([[0.0, 0.0], [100.0, 0.0], [1000.0, 0.0]])
    m = classify_all(pts, np.ones(3, bool), None, 2.5, horizon=500)
    assert m[0, 1] == LinkClass.LOS and m[0, 2] == -1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 300), st.floats(0, 300)), min_size=2, max_size=12, unique=True))
def test_classification_symmetric_property(pts):
    bs = urban_buildings(300, 100, 20)
    m = classify_all(np.array(pts), np.ones(len(pts), bool), bs, 2.5)
    assert (m == m.T).all()


def test_lonlat_projection():
    out = lonlat_to_local([(0.0, 0.0), (0.001, 0.0), (0.0, 0.001)], (0.0, 0.0))
    assert out[0] == pytest.approx([0, 0])
    assert out[1, 0] == pytest.approx(111.19, abs=0.05)
    assert out[2, 1] == pytest.approx(111.19, abs=0.05)
