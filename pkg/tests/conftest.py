import math

import numpy as np
import pytest

from nested_pursuit.world import bundled_map, map_from_polygons


def rect(x0, y0, x1, y1):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


def winding_number(px, py, poly):
    """Independent oracle: winding number of a closed polygon around (px, py)."""
    wn = 0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)
        if y0 <= py < y1 and cross > 0:
            wn += 1
        elif y1 <= py < y0 and cross < 0:
            wn -= 1
    return wn


def point_segment_distance(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    d2 = dx * dx + dy * dy
    u = 0.0 if d2 == 0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / d2))
    return math.hypot(px - ax - u * dx, py - ay - u * dy)


def star_polygon(rng, cx, cy, r_min, r_max, n):
    """Random star-shaped (hence simple) polygon around a centre."""
    # jittered but ordered angles keep the polygon non-degenerate
    angles = np.linspace(0, 2 * math.pi, n, endpoint=False) + rng.uniform(0, 0.5 * 2 * math.pi / n, n)
    radii = rng.uniform(r_min, r_max, n)
    return [(cx + r * math.cos(a), cy + r * math.sin(a)) for r, a in zip(radii, angles)]


@pytest.fixture(scope="session")
def bremen():
    return bundled_map("bremen_like")


@pytest.fixture(scope="session")
def empty_square():
    return bundled_map("empty_square")


@pytest.fixture(scope="session")
def single_wall():
    return bundled_map("single_wall")


@pytest.fixture(scope="session")
def open_field():
    """40 x 40 obstacle-free map with four corner waypoints."""
    return map_from_polygons(
        ((0, 0), (40, 40)), [],
        [("a", (2, 2)), ("b", (38, 2)), ("c", (38, 38)), ("d", (2, 38))],
        chaser_start=(20, 2), map_id="open_field",
    )


@pytest.fixture(scope="session")
def gap_wall():
    """Wall across x = 10 with a gap near the top."""
    return map_from_polygons(
        ((0, 0), (20, 20)), [rect(9.5, 0, 10.5, 16)],
        [("a", (2, 2)), ("b", (18, 2))],
        chaser_start=(2, 18), map_id="gap_wall",
    )
