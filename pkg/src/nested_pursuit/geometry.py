"""Planar geometry primitives: points, segments, polygons and ray casting.

The public functions operate on the small value types defined here. The
simulation hot paths (planning, visibility) go through the numba kernels
prefixed with an underscore, which take an :class:`ObstacleSet` packed into
flat arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numba
import numpy as np

EPS = 1e-9


@dataclass(frozen=True, slots=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y

    def distance(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    @classmethod
    def of(cls, xy) -> "Point2":
        return cls(float(xy[0]), float(xy[1]))


@dataclass(frozen=True, slots=True)
class Segment:
    a: Point2
    b: Point2

    @property
    def length(self) -> float:
        return self.a.distance(self.b)


def _signed_area(coords: np.ndarray) -> float:
    x, y = coords[:, 0], coords[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class Polygon:
    """Simple polygon with counter-clockwise vertex order (closure implicit)."""

    vertices: tuple[Point2, ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValueError("polygon needs at least 3 vertices")

    @classmethod
    def from_coords(cls, coords) -> "Polygon":
        """Build a validated polygon, dropping an explicit closing vertex and
        normalizing the orientation to counter-clockwise."""
        arr = np.asarray(coords, dtype=float).reshape(-1, 2)
        if len(arr) >= 2 and np.allclose(arr[0], arr[-1]):
            arr = arr[:-1]
        if len(arr) < 3:
            raise ValueError("polygon needs at least 3 distinct vertices")
        if not np.all(np.isfinite(arr)):
            raise ValueError("polygon has non-finite coordinates")
        area = _signed_area(arr)
        if abs(area) <= EPS:
            raise ValueError("polygon is degenerate (zero area)")
        if area < 0:
            arr = arr[::-1]
        poly = cls(tuple(Point2(float(x), float(y)) for x, y in arr))
        if not poly.is_simple():
            raise ValueError("polygon is self-intersecting")
        return poly

    @property
    def array(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.vertices], dtype=float)

    def edges(self) -> list[Segment]:
        n = len(self.vertices)
        return [Segment(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]

    @property
    def area(self) -> float:
        return abs(_signed_area(self.array))

    def centroid(self) -> Point2:
        arr = self.array
        x, y = arr[:, 0], arr[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = cross.sum() / 2.0
        return Point2(float(((x + xn) * cross).sum() / (6 * a)), float(((y + yn) * cross).sum() / (6 * a)))

    def is_simple(self) -> bool:
        edges = self.edges()
        n = len(edges)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    # neighbours share exactly one vertex; only a fold-back overlaps
                    shared = edges[i].b if j == i + 1 else edges[i].a
                    hit = segments_intersect(edges[i], edges[j])
                    if hit is not None and hit.distance(shared) > EPS:
                        return False
                    continue
                if segments_intersect(edges[i], edges[j]) is not None:
                    return False
        return True


def _cross(ox, oy, ax, ay, bx, by) -> float:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def segments_intersect(s1: Segment, s2: Segment) -> Optional[Point2]:
    """Intersection point of two closed segments, or None.

    Collinear overlapping segments intersect; the reported point is the
    overlap point nearest ``s1.a``.
    """
    (ax, ay), (bx, by) = s1.a, s1.b
    (cx, cy), (dx, dy) = s2.a, s2.b
    rx, ry = bx - ax, by - ay
    sx, sy = dx - cx, dy - cy
    denom = rx * sy - ry * sx
    qpx, qpy = cx - ax, cy - ay
    scale = max(math.hypot(rx, ry) * math.hypot(sx, sy), EPS)
    if abs(denom) <= EPS * scale:
        # parallel; intersect only when collinear
        rlen2 = rx * rx + ry * ry
        if rlen2 <= EPS * EPS:
            # s1 is a point
            if _point_segment_distance(ax, ay, cx, cy, dx, dy) <= EPS:
                return Point2(ax, ay)
            return None
        if abs(qpx * ry - qpy * rx) > EPS * math.sqrt(rlen2):
            return _endpoint_contact(s1, s2)
        t0 = (qpx * rx + qpy * ry) / rlen2
        t1 = ((dx - ax) * rx + (dy - ay) * ry) / rlen2
        lo, hi = min(t0, t1), max(t0, t1)
        tol = EPS / math.sqrt(rlen2)
        if hi < -tol or lo > 1 + tol:
            return None
        t = min(max(lo, 0.0), 1.0)
        return Point2(ax + t * rx, ay + t * ry)
    t = (qpx * sy - qpy * sx) / denom
    u = (qpx * ry - qpy * rx) / denom
    tol1 = EPS / max(math.hypot(rx, ry), EPS)
    tol2 = EPS / max(math.hypot(sx, sy), EPS)
    if -tol1 <= t <= 1 + tol1 and -tol2 <= u <= 1 + tol2:
        t = min(max(t, 0.0), 1.0)
        return Point2(ax + t * rx, ay + t * ry)
    return _endpoint_contact(s1, s2)


def _endpoint_contact(s1: Segment, s2: Segment) -> Optional[Point2]:
    # tolerance fallback so touching endpoints are found in either argument order
    (ax, ay), (bx, by) = s1.a, s1.b
    (cx, cy), (dx, dy) = s2.a, s2.b
    hits = [p for p in (s2.a, s2.b) if _point_segment_distance(p.x, p.y, ax, ay, bx, by) <= EPS]
    hits += [p for p in (s1.a, s1.b) if _point_segment_distance(p.x, p.y, cx, cy, dx, dy) <= EPS]
    if not hits:
        return None
    return min(hits, key=s1.a.distance)


def _point_segment_distance(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = min(max(((px - ax) * dx + (py - ay) * dy) / l2, 0.0), 1.0)
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


# ---------------------------------------------------------------------------
# packed obstacle arrays + numba kernels


class ObstacleSet:
    """Obstacle polygons packed into flat arrays for the compiled kernels.

    ``verts`` stacks all vertices, polygon ``i`` owning rows
    ``offsets[i]:offsets[i + 1]``; ``bboxes`` rows are (xmin, ymin, xmax, ymax).
    """

    __slots__ = ("polygons", "verts", "offsets", "bboxes")

    def __init__(self, polygons: Sequence[Polygon]):
        self.polygons = tuple(polygons)
        arrays = [p.array for p in self.polygons]
        if arrays:
            self.verts = np.ascontiguousarray(np.vstack(arrays))
            self.bboxes = np.array([[a[:, 0].min(), a[:, 1].min(), a[:, 0].max(), a[:, 1].max()] for a in arrays])
        else:
            self.verts = np.zeros((0, 2))
            self.bboxes = np.zeros((0, 4))
        self.offsets = np.zeros(len(arrays) + 1, dtype=np.int64)
        self.offsets[1:] = np.cumsum([len(a) for a in arrays])

    def __len__(self):
        return len(self.polygons)

    @property
    def kernel_args(self):
        return self.verts, self.offsets, self.bboxes


def as_obstacle_set(obstacles) -> ObstacleSet:
    if isinstance(obstacles, ObstacleSet):
        return obstacles
    return ObstacleSet(list(obstacles))


@numba.njit(cache=True, nogil=True)
def _seg_dist2(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        return (px - ax) ** 2 + (py - ay) ** 2
    t = ((px - ax) * dx + (py - ay) * dy) / l2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    qx = ax + t * dx - px
    qy = ay + t * dy - py
    return qx * qx + qy * qy


@numba.njit(cache=True, nogil=True)
def _inside_polygon(px, py, verts, s, e, closed):
    """Crossing-number test. Points within EPS of the boundary count as
    inside when ``closed`` and as outside otherwise."""
    inside = False
    j = e - 1
    for i in range(s, e):
        xi = verts[i, 0]
        yi = verts[i, 1]
        xj = verts[j, 0]
        yj = verts[j, 1]
        if _seg_dist2(px, py, xj, yj, xi, yi) <= EPS * EPS:
            return closed
        if (yi > py) != (yj > py):
            xint = xj + (py - yj) * (xi - xj) / (yi - yj)
            if px < xint:
                inside = not inside
        j = i
    return inside


@numba.njit(cache=True, nogil=True)
def _strictly_inside_any(px, py, verts, offsets, bboxes):
    for p in range(bboxes.shape[0]):
        if px < bboxes[p, 0] or px > bboxes[p, 2] or py < bboxes[p, 1] or py > bboxes[p, 3]:
            continue
        if _inside_polygon(px, py, verts, offsets[p], offsets[p + 1], False):
            return True
    return False


@numba.njit(cache=True, nogil=True)
def _segment_blocked(ax, ay, bx, by, verts, offsets, bboxes):
    """True iff the segment a-b passes through the interior of an obstacle.

    Touching a boundary (grazing a vertex, sliding along an edge) does not
    block. Any proper edge crossing blocks immediately; otherwise the segment
    is cut at every boundary contact and each piece's midpoint is tested.
    """
    sx = bx - ax
    sy = by - ay
    ls = math.sqrt(sx * sx + sy * sy)
    if ls <= EPS:
        return _strictly_inside_any(ax, ay, verts, offsets, bboxes)
    xmin = min(ax, bx) - EPS
    xmax = max(ax, bx) + EPS
    ymin = min(ay, by) - EPS
    ymax = max(ay, by) + EPS
    maxv = 0
    for p in range(bboxes.shape[0]):
        maxv = max(maxv, offsets[p + 1] - offsets[p])
    params = np.empty(2 * maxv + 2)
    for p in range(bboxes.shape[0]):
        if xmax < bboxes[p, 0] or xmin > bboxes[p, 2] or ymax < bboxes[p, 1] or ymin > bboxes[p, 3]:
            continue
        s = offsets[p]
        e = offsets[p + 1]
        nt = 0
        params[nt] = 0.0
        params[nt + 1] = 1.0
        nt = 2
        for i in range(s, e):
            j = i + 1 if i + 1 < e else s
            x0 = verts[i, 0]
            y0 = verts[i, 1]
            x1 = verts[j, 0]
            y1 = verts[j, 1]
            ex = x1 - x0
            ey = y1 - y0
            le = math.sqrt(ex * ex + ey * ey)
            # signed distances of a, b from the edge line and of the edge ends from a-b
            d1 = (ex * (ay - y0) - ey * (ax - x0)) / le
            d2 = (ex * (by - y0) - ey * (bx - x0)) / le
            d3 = (sx * (y0 - ay) - sy * (x0 - ax)) / ls
            d4 = (sx * (y1 - ay) - sy * (x1 - ax)) / ls
            if ((d1 > EPS and d2 < -EPS) or (d1 < -EPS and d2 > EPS)) and (
                (d3 > EPS and d4 < -EPS) or (d3 < -EPS and d4 > EPS)
            ):
                return True
            if abs(d3) <= EPS:
                t = ((x0 - ax) * sx + (y0 - ay) * sy) / (ls * ls)
                if t > 0.0 and t < 1.0:
                    params[nt] = t
                    nt += 1
            if abs(d4) <= EPS:
                t = ((x1 - ax) * sx + (y1 - ay) * sy) / (ls * ls)
                if t > 0.0 and t < 1.0:
                    params[nt] = t
                    nt += 1
        ts = np.sort(params[:nt])
        for k in range(nt - 1):
            if ts[k + 1] - ts[k] <= 1e-12:
                continue
            tm = 0.5 * (ts[k] + ts[k + 1])
            if _inside_polygon(ax + tm * sx, ay + tm * sy, verts, s, e, False):
                return True
    return False


@numba.njit(cache=True, nogil=True)
def _ray_cast(ox, oy, angle, verts, offsets, max_range):
    dx = math.cos(angle)
    dy = math.sin(angle)
    best = max_range
    for p in range(offsets.shape[0] - 1):
        s = offsets[p]
        e = offsets[p + 1]
        for i in range(s, e):
            j = i + 1 if i + 1 < e else s
            x0 = verts[i, 0]
            y0 = verts[i, 1]
            ex = verts[j, 0] - x0
            ey = verts[j, 1] - y0
            denom = dx * ey - dy * ex
            if abs(denom) <= 1e-15:
                continue
            qx = x0 - ox
            qy = y0 - oy
            r = (qx * ey - qy * ex) / denom
            u = (qx * dy - qy * dx) / denom
            if r >= 0.0 and u >= -EPS and u <= 1.0 + EPS and r < best:
                best = r
    return best


# ---------------------------------------------------------------------------
# public wrappers


def point_in_polygon(p: Point2, poly: Polygon) -> bool:
    """Closed containment test: boundary points (within EPS) are inside."""
    arr = poly.array
    return bool(_inside_polygon(float(p.x), float(p.y), arr, 0, len(arr), True))


def point_strictly_inside(p: Point2, obstacles) -> bool:
    obs = as_obstacle_set(obstacles)
    return bool(_strictly_inside_any(float(p.x), float(p.y), *obs.kernel_args))


def segment_blocked(s: Segment, obstacles) -> bool:
    """True iff ``s`` crosses into the interior of any obstacle."""
    obs = as_obstacle_set(obstacles)
    return bool(_segment_blocked(float(s.a.x), float(s.a.y), float(s.b.x), float(s.b.y), *obs.kernel_args))


def ray_cast(origin: Point2, angle: float, obstacles, max_range: float) -> float:
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    obs = as_obstacle_set(obstacles)
    return float(_ray_cast(float(origin.x), float(origin.y), float(angle), obs.verts, obs.offsets, float(max_range)))


def bearing(origin: Point2, target: Point2) -> float:
    return math.atan2(target.y - origin.y, target.x - origin.x)


def angle_diff(a: float, b: float) -> float:
    """Smallest signed difference a - b wrapped to [-pi, pi)."""
    return (a - b + math.pi) % (2 * math.pi) - math.pi


def polygon_area(coords) -> float:
    return abs(_signed_area(np.asarray(coords, dtype=float)))
