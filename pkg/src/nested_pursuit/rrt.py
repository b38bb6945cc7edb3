"""RRT path sampling, shortcut smoothing and constant-speed time parameterization.

Together these define the stochastic trajectory prior: every call draws a
fresh random tree, so repeated plans between the same endpoints form a
distribution over routes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .geometry import Point2, _segment_blocked, _strictly_inside_any
from .world import WorldMap

log = logging.getLogger(__name__)

# status codes returned by the fused planning kernel
PLAN_OK = 0
PLAN_RETRIED = 1
PLAN_HELD = 2


class PlanningFailure(RuntimeError):
    """RRT exhausted its iteration budget without reaching the goal."""


@dataclass(frozen=True)
class RrtConfig:
    step_size: float
    goal_bias: float = 0.05
    goal_tolerance: Optional[float] = None
    max_iterations: int = 5000
    smoothing_iterations: int = 100
    speed: float = 1.0

    def __post_init__(self):
        if self.goal_tolerance is None:
            object.__setattr__(self, "goal_tolerance", self.step_size)
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if self.goal_tolerance <= 0:
            raise ValueError("goal_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.smoothing_iterations < 0:
            raise ValueError("smoothing_iterations must be nonnegative")
        if self.speed <= 0:
            raise ValueError("speed must be positive")

    @classmethod
    def for_map(cls, world: WorldMap, horizon_T: int, **overrides) -> "RrtConfig":
        """Defaults scaled to the map: step 2% of the diagonal, and a speed
        at which crossing the longer map side takes about ``horizon_T`` steps."""
        params = dict(
            step_size=0.02 * world.diagonal,
            speed=max(world.width, world.height) / horizon_T,
        )
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**params)


@dataclass(frozen=True)
class PlannedPath:
    waypoints: np.ndarray  # (n, 2)

    @property
    def length(self) -> float:
        return path_length(self.waypoints)

    def __len__(self):
        return len(self.waypoints)


@dataclass(frozen=True)
class Trajectory:
    """Positions indexed by integer time steps ``t_first..t_last``."""

    positions: np.ndarray  # (t_last - t_first + 1, 2)
    t_first: int

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or len(pos) == 0:
            raise ValueError("positions must be a non-empty (n, 2) array")
        object.__setattr__(self, "positions", pos)

    @property
    def t_last(self) -> int:
        return self.t_first + len(self.positions) - 1

    def __len__(self):
        return len(self.positions)

    def covers(self, t0: int, t1: int) -> bool:
        return self.t_first <= t0 and t1 <= self.t_last

    def at(self, t: int) -> np.ndarray:
        if not self.t_first <= t <= self.t_last:
            raise IndexError(f"time {t} outside [{self.t_first}, {self.t_last}]")
        return self.positions[t - self.t_first]

    def slice(self, t0: int, t1: int) -> "Trajectory":
        if not self.covers(t0, t1):
            raise IndexError(f"[{t0}, {t1}] not covered by [{self.t_first}, {self.t_last}]")
        return Trajectory(self.positions[t0 - self.t_first : t1 - self.t_first + 1], t0)

    def extend(self, other: "Trajectory") -> "Trajectory":
        """Concatenate a trajectory that starts right after this one ends."""
        if other.t_first != self.t_last + 1:
            raise ValueError(f"cannot append trajectory starting at {other.t_first} after {self.t_last}")
        return Trajectory(np.vstack([self.positions, other.positions]), self.t_first)

    @classmethod
    def stationary(cls, p, t_first: int, t_last: int) -> "Trajectory":
        return cls(np.tile(np.asarray(tuple(p), dtype=float), (t_last - t_first + 1, 1)), t_first)


def path_length(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(points, axis=0).T)))


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True, nogil=True)
def _rrt_kernel(sx, sy, gx, gy, bounds, verts, offsets, bboxes, step, goal_bias, goal_tol, max_iter, rng):
    """Grow a holonomic RRT from start; returns (path, ok)."""
    if math.hypot(gx - sx, gy - sy) <= 1e-12:
        out = np.empty((1, 2))
        out[0, 0] = sx
        out[0, 1] = sy
        return out, True
    nodes = np.empty((max_iter + 2, 2))
    parent = np.empty(max_iter + 2, dtype=np.int64)
    nodes[0, 0] = sx
    nodes[0, 1] = sy
    parent[0] = -1
    n = 1
    goal_node = -1
    if math.hypot(gx - sx, gy - sy) <= goal_tol and not _segment_blocked(sx, sy, gx, gy, verts, offsets, bboxes):
        goal_node = 0
    bx0 = bounds[0]
    by0 = bounds[1]
    bw = bounds[2] - bounds[0]
    bh = bounds[3] - bounds[1]
    it = 0
    while goal_node < 0 and it < max_iter:
        it += 1
        if rng.random() < goal_bias:
            qx = gx
            qy = gy
        else:
            qx = bx0 + bw * rng.random()
            qy = by0 + bh * rng.random()
            tries = 0
            while _strictly_inside_any(qx, qy, verts, offsets, bboxes) and tries < 100:
                qx = bx0 + bw * rng.random()
                qy = by0 + bh * rng.random()
                tries += 1
        best = 0
        bd = np.inf
        for i in range(n):
            dx = nodes[i, 0] - qx
            dy = nodes[i, 1] - qy
            d = dx * dx + dy * dy
            if d < bd:
                bd = d
                best = i
        d = math.sqrt(bd)
        if d <= 1e-12:
            continue
        px = nodes[best, 0]
        py = nodes[best, 1]
        if d > step:
            nx = px + (qx - px) * step / d
            ny = py + (qy - py) * step / d
        else:
            nx = qx
            ny = qy
        if _segment_blocked(px, py, nx, ny, verts, offsets, bboxes):
            continue
        nodes[n, 0] = nx
        nodes[n, 1] = ny
        parent[n] = best
        n += 1
        if math.hypot(gx - nx, gy - ny) <= goal_tol and not _segment_blocked(nx, ny, gx, gy, verts, offsets, bboxes):
            goal_node = n - 1
    if goal_node < 0:
        return np.empty((0, 2)), False
    # walk back to the root, then append the exact goal
    depth = 0
    i = goal_node
    while i >= 0:
        depth += 1
        i = parent[i]
    same = nodes[goal_node, 0] == gx and nodes[goal_node, 1] == gy
    m = depth if same else depth + 1
    out = np.empty((m, 2))
    i = goal_node
    k = depth - 1
    while i >= 0:
        out[k, 0] = nodes[i, 0]
        out[k, 1] = nodes[i, 1]
        k -= 1
        i = parent[i]
    if not same:
        out[m - 1, 0] = gx
        out[m - 1, 1] = gy
    return out, True


@numba.njit(cache=True, nogil=True)
def _smooth_kernel(path, iterations, verts, offsets, bboxes, rng):
    """Random shortcutting: join two random points of the polyline whenever
    the straight connection is free, then a greedy vertex pass. Never
    lengthens the path."""
    pts = path.copy()
    for _ in range(iterations):
        n = pts.shape[0]
        if n < 3:
            break
        cum = np.empty(n)
        cum[0] = 0.0
        for i in range(1, n):
            cum[i] = cum[i - 1] + math.hypot(pts[i, 0] - pts[i - 1, 0], pts[i, 1] - pts[i - 1, 1])
        total = cum[n - 1]
        if total <= 0.0:
            break
        s1 = rng.random() * total
        s2 = rng.random() * total
        if s1 > s2:
            s1, s2 = s2, s1
        # segment index containing each arc-length position
        i = 0
        while i < n - 2 and cum[i + 1] < s1:
            i += 1
        j = i
        while j < n - 2 and cum[j + 1] < s2:
            j += 1
        if i == j:
            continue
        li = cum[i + 1] - cum[i]
        lj = cum[j + 1] - cum[j]
        a = (s1 - cum[i]) / li if li > 0 else 0.0
        b = (s2 - cum[j]) / lj if lj > 0 else 0.0
        p1x = pts[i, 0] + a * (pts[i + 1, 0] - pts[i, 0])
        p1y = pts[i, 1] + a * (pts[i + 1, 1] - pts[i, 1])
        p2x = pts[j, 0] + b * (pts[j + 1, 0] - pts[j, 0])
        p2y = pts[j, 1] + b * (pts[j + 1, 1] - pts[j, 1])
        if _segment_blocked(p1x, p1y, p2x, p2y, verts, offsets, bboxes):
            continue
        out = np.empty((n + 2, 2))
        m = 0
        for k in range(i + 1):
            out[m] = pts[k]
            m += 1
        if p1x != out[m - 1, 0] or p1y != out[m - 1, 1]:
            out[m, 0] = p1x
            out[m, 1] = p1y
            m += 1
        if p2x != out[m - 1, 0] or p2y != out[m - 1, 1]:
            out[m, 0] = p2x
            out[m, 1] = p2y
            m += 1
        for k in range(j + 1, n):
            if pts[k, 0] != out[m - 1, 0] or pts[k, 1] != out[m - 1, 1]:
                out[m] = pts[k]
                m += 1
        pts = out[:m].copy()
    if iterations > 0:
        pts = _greedy_shortcut(pts, verts, offsets, bboxes)
    return pts


@numba.njit(cache=True, nogil=True)
def _greedy_shortcut(pts, verts, offsets, bboxes):
    """Final cleanup: from each kept vertex jump to the farthest vertex it
    sees directly. Removes the small kinks random picks rarely reach."""
    n = pts.shape[0]
    keep = np.empty(n, dtype=np.int64)
    keep[0] = 0
    m = 1
    i = 0
    while i < n - 1:
        j = n - 1
        while j > i + 1 and _segment_blocked(pts[i, 0], pts[i, 1], pts[j, 0], pts[j, 1], verts, offsets, bboxes):
            j -= 1
        keep[m] = j
        m += 1
        i = j
    out = np.empty((m, 2))
    for k in range(m):
        out[k] = pts[keep[k]]
    return out


@numba.njit(cache=True, nogil=True)
def _discretize_kernel(path, speed, n_steps):
    """Constant-speed arc-length resampling; holds at the final point."""
    out = np.empty((n_steps, 2))
    n = path.shape[0]
    seg = 0
    seg_start = 0.0  # arc length at path[seg]
    for k in range(n_steps):
        s = k * speed
        while seg < n - 1:
            ln = math.hypot(path[seg + 1, 0] - path[seg, 0], path[seg + 1, 1] - path[seg, 1])
            if seg_start + ln >= s:
                break
            seg_start += ln
            seg += 1
        if seg >= n - 1:
            out[k, 0] = path[n - 1, 0]
            out[k, 1] = path[n - 1, 1]
        else:
            ln = math.hypot(path[seg + 1, 0] - path[seg, 0], path[seg + 1, 1] - path[seg, 1])
            a = (s - seg_start) / ln if ln > 0 else 0.0
            out[k, 0] = path[seg, 0] + a * (path[seg + 1, 0] - path[seg, 0])
            out[k, 1] = path[seg, 1] + a * (path[seg + 1, 1] - path[seg, 1])
    return out


@numba.njit(cache=True, nogil=True)
def _plan_positions(sx, sy, gx, gy, bounds, verts, offsets, bboxes, step, goal_bias, goal_tol,
                    max_iter, smooth_iters, speed, n_steps, rng):
    """RRT -> smoothing -> discretization in one call, with the call-site
    fallback: retry once with twice the iterations, then hold in place."""
    path, ok = _rrt_kernel(sx, sy, gx, gy, bounds, verts, offsets, bboxes, step, goal_bias, goal_tol, max_iter, rng)
    status = PLAN_OK
    if not ok:
        path, ok = _rrt_kernel(sx, sy, gx, gy, bounds, verts, offsets, bboxes, step, goal_bias, goal_tol,
                               2 * max_iter, rng)
        status = PLAN_RETRIED
    if not ok:
        out = np.empty((n_steps, 2))
        for k in range(n_steps):
            out[k, 0] = sx
            out[k, 1] = sy
        return out, PLAN_HELD
    path = _smooth_kernel(path, smooth_iters, verts, offsets, bboxes, rng)
    return _discretize_kernel(path, speed, n_steps), status


# ---------------------------------------------------------------------------
# public API


def rrt_plan(world: WorldMap, start: Point2, goal: Point2, cfg: RrtConfig, rng: np.random.Generator) -> PlannedPath:
    """Sample one collision-free polyline from ``start`` to ``goal``.

    Raises:
        PlanningFailure: if the tree does not reach the goal within
            ``cfg.max_iterations`` extensions.
    """
    path, ok = _rrt_kernel(
        float(start.x), float(start.y), float(goal.x), float(goal.y), world.bounds_array,
        *world.packed.kernel_args, float(cfg.step_size), float(cfg.goal_bias), float(cfg.goal_tolerance),
        int(cfg.max_iterations), rng,
    )
    if not ok:
        raise PlanningFailure(
            f"no path from ({start.x:.3f}, {start.y:.3f}) to ({goal.x:.3f}, {goal.y:.3f}) "
            f"within {cfg.max_iterations} iterations"
        )
    return PlannedPath(path)


def shortcut_smooth(path: PlannedPath, world: WorldMap, cfg: RrtConfig, rng: np.random.Generator) -> PlannedPath:
    pts = np.ascontiguousarray(path.waypoints, dtype=float)
    return PlannedPath(_smooth_kernel(pts, int(cfg.smoothing_iterations), *world.packed.kernel_args, rng))


def discretize(path: PlannedPath, cfg: RrtConfig, t_first: int, t_last: int) -> Trajectory:
    if t_first > t_last:
        raise ValueError("t_first must not exceed t_last")
    pts = np.ascontiguousarray(path.waypoints, dtype=float)
    return Trajectory(_discretize_kernel(pts, float(cfg.speed), t_last - t_first + 1), t_first)


def sample_trajectory(
    world: WorldMap,
    start,
    goal,
    cfg: RrtConfig,
    t_first: int,
    t_last: int,
    rng: np.random.Generator,
) -> tuple[Trajectory, int]:
    """Plan, smooth and discretize in one step, starting at ``start`` at time
    ``t_first``. Planning failures fall back to retry-then-hold.

    Returns the trajectory and a status code (PLAN_OK, PLAN_RETRIED, PLAN_HELD).
    """
    sx, sy = start
    gx, gy = goal
    pos, status = _plan_positions(
        float(sx), float(sy), float(gx), float(gy), world.bounds_array, *world.packed.kernel_args,
        float(cfg.step_size), float(cfg.goal_bias), float(cfg.goal_tolerance), int(cfg.max_iterations),
        int(cfg.smoothing_iterations), float(cfg.speed), t_last - t_first + 1, rng,
    )
    if status == PLAN_HELD:
        log.warning("RRT failed twice from (%.2f, %.2f) to (%.2f, %.2f); holding position", sx, sy, gx, gy)
    return Trajectory(pos, t_first), int(status)
