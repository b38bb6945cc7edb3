"""Limited field-of-view visibility: isovist polygons and per-step detection counts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .geometry import Point2, Polygon, _ray_cast, _segment_blocked, polygon_area
from .rrt import Trajectory
from .world import WorldMap


@dataclass(frozen=True)
class IsovistConfig:
    sight_range: float
    fov_half_angle: float = math.radians(22.5)
    ray_count: int = 64

    def __post_init__(self):
        if not 0.0 < self.fov_half_angle <= math.pi:
            raise ValueError("fov_half_angle must lie in (0, pi]")
        if self.sight_range <= 0:
            raise ValueError("sight_range must be positive")
        if self.ray_count < 8:
            raise ValueError("ray_count must be at least 8")

    @classmethod
    def for_map(cls, world: WorldMap, **overrides) -> "IsovistConfig":
        """45 degree cone with range a quarter of the map diagonal."""
        params = dict(sight_range=0.25 * world.diagonal)
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**params)


@dataclass(frozen=True)
class IsovistPolygon:
    apex: Point2
    boundary: np.ndarray  # (n, 2), apex first, counter-clockwise

    @property
    def area(self) -> float:
        return polygon_area(self.boundary)

    def as_polygon(self) -> Polygon:
        return Polygon(tuple(Point2(float(x), float(y)) for x, y in self.boundary))


@dataclass(frozen=True)
class VisibilityCount:
    steps_visible: int
    detected_at: Optional[int]


def _aim_bearing(apex: Point2, aim: Point2) -> float:
    if aim.x == apex.x and aim.y == apex.y:
        return 0.0
    return math.atan2(aim.y - apex.y, aim.x - apex.x)


def isovist(world: WorldMap, apex: Point2, aim: Point2, cfg: IsovistConfig) -> IsovistPolygon:
    """Fan of ``ray_count`` rays across the cone aimed from ``apex`` at ``aim``."""
    center = _aim_bearing(apex, aim)
    full = cfg.fov_half_angle >= math.pi
    angles = center + np.linspace(-cfg.fov_half_angle, cfg.fov_half_angle, cfg.ray_count, endpoint=not full)
    verts, offsets = world.packed.verts, world.packed.offsets
    pts = [(apex.x, apex.y)]
    for a in angles:
        r = _ray_cast(float(apex.x), float(apex.y), float(a), verts, offsets, float(cfg.sight_range))
        pts.append((apex.x + r * math.cos(a), apex.y + r * math.sin(a)))
    if full:
        # the apex is interior to a full-circle isovist, not a vertex
        pts = pts[1:]
    return IsovistPolygon(apex, np.array(pts))


@numba.njit(cache=True, nogil=True)
def _visible(ox, oy, tx, ty, ax, ay, fov_half, sight_range, verts, offsets, bboxes):
    dx = tx - ox
    dy = ty - oy
    d = math.hypot(dx, dy)
    if d <= 1e-9:
        return True
    if d > sight_range:
        return False
    if fov_half < math.pi:
        if ax == ox and ay == oy:
            aim = 0.0
        else:
            aim = math.atan2(ay - oy, ax - ox)
        diff = math.atan2(dy, dx) - aim
        diff = (diff + math.pi) % (2.0 * math.pi) - math.pi
        if abs(diff) > fov_half + 1e-12:
            return False
    return not _segment_blocked(ox, oy, tx, ty, verts, offsets, bboxes)


@numba.njit(cache=True, nogil=True)
def _count_visible(obs, tgt, fov_half, sight_range, verts, offsets, bboxes):
    """Per-row visibility with the cone aimed at the target itself.

    Returns (count, index of first visible row or -1)."""
    count = 0
    first = -1
    for i in range(obs.shape[0]):
        if _visible(obs[i, 0], obs[i, 1], tgt[i, 0], tgt[i, 1], tgt[i, 0], tgt[i, 1],
                    fov_half, sight_range, verts, offsets, bboxes):
            count += 1
            if first < 0:
                first = i
    return count, first


def is_visible(world: WorldMap, observer: Point2, target: Point2, aim: Point2, cfg: IsovistConfig) -> bool:
    """Range, cone and occlusion test. Co-located observer and target always see each other."""
    return bool(
        _visible(
            float(observer.x), float(observer.y), float(target.x), float(target.y), float(aim.x), float(aim.y),
            float(cfg.fov_half_angle), float(cfg.sight_range), *world.packed.kernel_args,
        )
    )


def time_visible(
    observer_traj: Trajectory,
    target_traj: Trajectory,
    world: WorldMap,
    cfg: IsovistConfig,
    t_range: tuple[int, int],
) -> VisibilityCount:
    """Count the steps in the inclusive range ``t_range`` at which the target is
    visible, aiming the observer's cone at the target each step."""
    t0, t1 = t_range
    if t0 > t1:
        return VisibilityCount(0, None)
    for name, tr in (("observer", observer_traj), ("target", target_traj)):
        if not tr.covers(t0, t1):
            raise ValueError(
                f"{name} trajectory covers [{tr.t_first}, {tr.t_last}], needs [{t0}, {t1}]"
            )
    obs = observer_traj.positions[t0 - observer_traj.t_first : t1 - observer_traj.t_first + 1]
    tgt = target_traj.positions[t0 - target_traj.t_first : t1 - target_traj.t_first + 1]
    count, first = count_visible_rows(obs, tgt, world, cfg)
    return VisibilityCount(count, None if first < 0 else t0 + first)


def count_visible_rows(obs: np.ndarray, tgt: np.ndarray, world: WorldMap, cfg: IsovistConfig) -> tuple[int, int]:
    count, first = _count_visible(
        np.ascontiguousarray(obs), np.ascontiguousarray(tgt), float(cfg.fov_half_angle), float(cfg.sight_range),
        *world.packed.kernel_args,
    )
    return int(count), int(first)
