import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import point_segment_distance, rect, star_polygon, winding_number
from nested_pursuit.geometry import (
    EPS,
    ObstacleSet,
    Point2,
    Polygon,
    Segment,
    angle_diff,
    point_in_polygon,
    point_strictly_inside,
    ray_cast,
    segment_blocked,
    segments_intersect,
)

P = Point2
coord = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
points = st.builds(Point2, coord, coord)
segments = st.builds(Segment, points, points)


def unit_square():
    return Polygon.from_coords(rect(0, 0, 1, 1))


# -- value types


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        Point2(float("nan"), 0.0)
    with pytest.raises(ValueError):
        Point2(0.0, float("inf"))


def test_polygon_normalized_to_ccw():
    cw = Polygon.from_coords([(0, 0), (0, 1), (1, 1), (1, 0)])
    arr = cw.array
    signed = 0.5 * np.sum(arr[:, 0] * np.roll(arr[:, 1], -1) - np.roll(arr[:, 0], -1) * arr[:, 1])
    assert signed > 0
    assert cw.area == pytest.approx(1.0)


def test_polygon_drops_closing_vertex():
    poly = Polygon.from_coords([(0, 0), (1, 0), (1, 1), (0, 0)])
    assert len(poly.vertices) == 3


@pytest.mark.parametrize("coords", [
    [(0, 0), (1, 0)],
    [(0, 0), (1, 1), (2, 2)],
    [(0, 0), (2, 2), (2, 0), (0, 2)],  # bow tie
])
def test_polygon_rejects_invalid(coords):
    with pytest.raises(ValueError):
        Polygon.from_coords(coords)


# -- segments_intersect


def test_symmetric_crossing():
    hit = segments_intersect(Segment(P(0, 0), P(1, 1)), Segment(P(0, 1), P(1, 0)))
    assert hit is not None
    assert (hit.x, hit.y) == pytest.approx((0.5, 0.5))


def test_parallel_disjoint():
    assert segments_intersect(Segment(P(0, 0), P(1, 0)), Segment(P(0, 1), P(1, 1))) is None


def test_collinear_overlap_returns_point_nearest_first_start():
    hit = segments_intersect(Segment(P(0, 0), P(2, 0)), Segment(P(1, 0), P(3, 0)))
    assert (hit.x, hit.y) == pytest.approx((1, 0))
    hit = segments_intersect(Segment(P(3, 0), P(1, 0)), Segment(P(0, 0), P(2, 0)))
    assert (hit.x, hit.y) == pytest.approx((2, 0))


def test_touching_endpoint_counts():
    hit = segments_intersect(Segment(P(0, 0), P(1, 0)), Segment(P(1, 0), P(1, 5)))
    assert (hit.x, hit.y) == pytest.approx((1, 0))


@settings(max_examples=300, deadline=None)
@given(segments, segments)
def test_intersection_presence_is_symmetric(s1, s2):
    assert (segments_intersect(s1, s2) is None) == (segments_intersect(s2, s1) is None)


@settings(max_examples=300, deadline=None)
@given(segments, segments)
def test_intersection_point_lies_on_both(s1, s2):
    hit = segments_intersect(s1, s2)
    if hit is None:
        return
    for s in (s1, s2):
        assert point_segment_distance(hit.x, hit.y, s.a.x, s.a.y, s.b.x, s.b.y) < 1e-6


# -- point_in_polygon


@pytest.mark.parametrize("p, expected", [((0.5, 0.5), True), ((2, 2), False), ((1.0, 0.5), True), ((0, 0), True)])
def test_unit_square_containment(p, expected):
    assert point_in_polygon(P(*p), unit_square()) is expected


def test_point_in_polygon_matches_winding_number():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(200):
        coords = star_polygon(rng, 0, 0, 0.5, 3, int(rng.integers(3, 12)))
        poly = Polygon.from_coords(coords)
        for px, py in rng.uniform(-3.5, 3.5, (50, 2)):
            near = min(point_segment_distance(px, py, *coords[i], *coords[(i + 1) % len(coords)])
                       for i in range(len(coords)))
            if near <= EPS:
                continue
            assert point_in_polygon(P(px, py), poly) == (winding_number(px, py, coords) != 0)
            checked += 1
    assert checked > 9900


def test_strict_insideness_excludes_boundary():
    obs = [unit_square()]
    assert point_strictly_inside(P(0.5, 0.5), obs)
    assert not point_strictly_inside(P(1.0, 0.5), obs)
    assert not point_strictly_inside(P(0.0, 0.0), obs)


# -- segment_blocked


def dense_oracle_blocked(a, b, polys, n=1000):
    """Blocked iff some interior sample of the segment lies strictly inside."""
    for u in (np.arange(1, n + 1) / (n + 1)):
        x, y = a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])
        for coords in polys:
            if winding_number(x, y, coords) != 0 and min(
                point_segment_distance(x, y, *coords[i], *coords[(i + 1) % len(coords)])
                for i in range(len(coords))) > EPS:
                return True
    return False


def test_no_obstacles_never_blocks():
    assert not segment_blocked(Segment(P(0, 0), P(1, 0)), [])


def test_segment_through_centre_blocks():
    sq = Polygon.from_coords(rect(1, -1, 2, 1))
    assert segment_blocked(Segment(P(0, 0), P(3, 0)), [sq])


def test_endpoint_inside_blocks():
    sq = Polygon.from_coords(rect(1, -1, 2, 1))
    assert segment_blocked(Segment(P(0, 0), P(1.5, 0)), [sq])


@pytest.mark.parametrize("a, b", [
    ((0, 2), (2, 0)),       # tangent at vertex (1, 1)
    ((-1, 1), (3, 1)),      # slides along the top edge
    ((1, 1), (3, 3)),       # starts on a vertex, leaves outward
    ((-1, -1), (2, 2)),     # diagonal through two vertices, crosses interior
    ((0.5, 0), (0.5, 2)),   # starts on the bottom edge and goes through
    ((1, 0.5), (2, 0.5)),   # starts on the right edge, leaves outward
    ((-1, 0), (0, 0)),      # ends on a vertex from outside
])
def test_grazing_cases_match_dense_oracle(a, b):
    coords = rect(0, 0, 1, 1)
    got = segment_blocked(Segment(P(*a), P(*b)), [Polygon.from_coords(coords)])
    assert got == dense_oracle_blocked(a, b, [coords])


def test_random_segments_match_dense_oracle():
    rng = np.random.default_rng(5)
    polys = [star_polygon(rng, cx, cy, 0.5, 1.5, 6) for cx, cy in [(2, 2), (5, 5), (2, 6)]]
    obs = ObstacleSet([Polygon.from_coords(c) for c in polys])
    for _ in range(60):
        a, b = rng.uniform(0, 7, 2), rng.uniform(0, 7, 2)
        assert segment_blocked(Segment(P(*a), P(*b)), obs) == dense_oracle_blocked(a, b, polys, n=400)


@settings(max_examples=150, deadline=None)
@given(st.builds(Segment, st.builds(Point2, st.floats(-1, 4), st.floats(-1, 4)),
                 st.builds(Point2, st.floats(-1, 4), st.floats(-1, 4))))
def test_unblocked_segments_avoid_interiors(s):
    coords = [rect(0, 0, 1, 1), [(2, 2), (3, 2), (2.5, 3)]]
    obs = [Polygon.from_coords(c) for c in coords]
    if segment_blocked(s, obs):
        return
    n = max(int(s.length / 1e-3), 1)
    u = np.arange(n + 1) / n
    xs = s.a.x + u * (s.b.x - s.a.x)
    ys = s.a.y + u * (s.b.y - s.a.y)
    for x, y in zip(xs, ys):
        assert not point_strictly_inside(P(x, y), obs)


# -- ray_cast


def brute_ray(ox, oy, angle, polys, max_range):
    dx, dy = math.cos(angle), math.sin(angle)
    best = max_range
    for coords in polys:
        for i in range(len(coords)):
            (ax, ay), (bx, by) = coords[i], coords[(i + 1) % len(coords)]
            ex, ey = bx - ax, by - ay
            den = dx * ey - dy * ex
            if abs(den) < 1e-15:
                continue
            t = ((ax - ox) * ey - (ay - oy) * ex) / den
            u = ((ax - ox) * dy - (ay - oy) * dx) / den
            if t >= 0 and -1e-12 <= u <= 1 + 1e-12:
                best = min(best, t)
    return best


def test_empty_map_returns_max_range():
    for a in np.linspace(-math.pi, math.pi, 9):
        assert ray_cast(P(0, 0), a, [], 5.0) == 5.0


def test_axis_aligned_wall_hit():
    wall = Polygon.from_coords(rect(2, -1, 2.1, 1))
    assert ray_cast(P(0, 0), 0.0, [wall], 10.0) == pytest.approx(2.0, abs=1e-6)


def test_ray_cast_rejects_nonpositive_range():
    with pytest.raises(ValueError):
        ray_cast(P(0, 0), 0.0, [], 0.0)


def test_ray_cast_matches_brute_force():
    rng = np.random.default_rng(9)
    for _ in range(40):
        polys = [star_polygon(rng, *rng.uniform(-8, 8, 2), 0.5, 2.0, int(rng.integers(3, 8))) for _ in range(5)]
        obs = ObstacleSet([Polygon.from_coords(c) for c in polys])
        origin = rng.uniform(-10, 10, 2)
        for angle in rng.uniform(-math.pi, math.pi, 10):
            got = ray_cast(P(*origin), angle, obs, 15.0)
            assert got == pytest.approx(brute_ray(*origin, angle, polys, 15.0), abs=1e-9)


def test_adding_obstacles_never_lengthens_rays():
    rng = np.random.default_rng(10)
    base = [Polygon.from_coords(star_polygon(rng, 3, 3, 0.5, 1.5, 5))]
    extra = base + [Polygon.from_coords(star_polygon(rng, -3, 2, 0.5, 1.5, 5))]
    for _ in range(200):
        origin, angle = P(*rng.uniform(-6, 6, 2)), rng.uniform(-math.pi, math.pi)
        assert ray_cast(origin, angle, extra, 12.0) <= ray_cast(origin, angle, base, 12.0)


@given(st.floats(-20, 20), st.floats(-20, 20))
def test_angle_diff_wraps(a, b):
    d = angle_diff(a, b)
    assert -math.pi <= d < math.pi
    assert math.cos(d) == pytest.approx(math.cos(a - b), abs=1e-9)
