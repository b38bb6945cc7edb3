"""Static SVG rendering of maps, trajectories, heat maps and isovists.

Output is a pure function of its inputs, with coordinates printed at fixed
precision so identical inputs give byte-identical documents.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union
from xml.sax.saxutils import escape

import numpy as np

from .world import WorldMap


@dataclass
class TrajectoryLayer:
    id: str
    points: np.ndarray
    color: str = "#1f5fbf"
    width: float = 2.0
    dashed: bool = False


@dataclass
class HeatmapLayer:
    trajectories: Sequence[np.ndarray]
    resolution: int = 50
    color: str = "#d62728"


@dataclass
class IsovistLayer:
    boundary: np.ndarray
    color: str = "#ffbf00"
    opacity: float = 0.35


@dataclass
class PointsLayer:
    """Scatter of weighted points, e.g. imagined runner positions."""

    points: np.ndarray  # (n, 2) or (n, 3) with weights in the last column
    color: str = "#c71585"
    radius: float = 3.0


Layer = Union[TrajectoryLayer, HeatmapLayer, IsovistLayer, PointsLayer]


@dataclass
class RenderSpec:
    layers: list = field(default_factory=list)
    canvas: int = 800
    obstacle_color: str = "#7f7f7f"
    waypoint_color: str = "#2ca02c"
    show_waypoints: bool = True


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    def __init__(self, world: WorldMap, canvas: int):
        self.x0, self.y1 = world.bounds_min.x, world.bounds_max.y
        self.scale = canvas / max(world.width, world.height)
        self.w = world.width * self.scale
        self.h = world.height * self.scale

    def xy(self, x: float, y: float) -> tuple[str, str]:
        return _fmt((x - self.x0) * self.scale), _fmt((self.y1 - y) * self.scale)

    def points(self, pts) -> str:
        return " ".join(",".join(self.xy(x, y)) for x, y in np.asarray(pts)[:, :2])


def heat_counts(world: WorldMap, trajectories: Sequence[np.ndarray], resolution: int) -> np.ndarray:
    """Visit counts on a ``resolution`` x ``resolution`` grid over the bounds.

    Each trajectory segment is sampled at half-cell spacing and contributes
    at most once per cell it passes, so a trajectory lingering in one spot
    does not dominate.
    """
    counts = np.zeros((resolution, resolution))
    cw = world.width / resolution
    ch = world.height / resolution
    step = 0.5 * min(cw, ch)
    for traj in trajectories:
        pts = np.asarray(traj, dtype=float)[:, :2]
        samples = [pts[:1]]
        for a, b in zip(pts[:-1], pts[1:]):
            n = max(int(np.ceil(np.hypot(*(b - a)) / step)), 1)
            samples.append(a + (b - a) * (np.arange(1, n + 1) / n)[:, None])
        s = np.vstack(samples)
        ix = np.clip(((s[:, 0] - world.bounds_min.x) / cw).astype(int), 0, resolution - 1)
        iy = np.clip(((s[:, 1] - world.bounds_min.y) / ch).astype(int), 0, resolution - 1)
        visited = np.zeros_like(counts, dtype=bool)
        visited[iy, ix] = True
        counts += visited
    return counts


def render_svg(world: WorldMap, spec: RenderSpec) -> str:
    f = _Frame(world, spec.canvas)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_fmt(f.w)}" height="{_fmt(f.h)}" '
        f'viewBox="0 0 {_fmt(f.w)} {_fmt(f.h)}">',
        f'<rect class="bounds" x="0.00" y="0.00" width="{_fmt(f.w)}" height="{_fmt(f.h)}" '
        'fill="#ffffff" stroke="#000000"/>',
    ]
    for poly in world.obstacles:
        out.append(f'<polygon class="obstacle" points="{f.points(poly.array)}" fill="{spec.obstacle_color}"/>')
    for layer in spec.layers:
        out.extend(_render_layer(world, f, layer))
    if spec.show_waypoints:
        for wp in world.waypoints:
            x, y = f.xy(wp.location.x, wp.location.y)
            out.append(f'<g class="waypoint"><circle cx="{x}" cy="{y}" r="5" fill="{spec.waypoint_color}"/>'
                       f'<text x="{x}" y="{y}" dx="7" dy="-7" font-size="14">{escape(wp.name)}</text></g>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _render_layer(world: WorldMap, f: _Frame, layer) -> list[str]:
    if isinstance(layer, TrajectoryLayer):
        dash = ' stroke-dasharray="6,4"' if layer.dashed else ""
        return [f'<polyline class="trajectory" id="{escape(layer.id)}" points="{f.points(layer.points)}" '
                f'fill="none" stroke="{layer.color}" stroke-width="{_fmt(layer.width)}"{dash}/>']
    if isinstance(layer, HeatmapLayer):
        counts = heat_counts(world, layer.trajectories, layer.resolution)
        peak = counts.max()
        if peak <= 0:
            return []
        cw = world.width / layer.resolution
        ch = world.height / layer.resolution
        lines = []
        for iy, ix in zip(*np.nonzero(counts)):
            x, y = f.xy(world.bounds_min.x + ix * cw, world.bounds_min.y + (iy + 1) * ch)
            lines.append(f'<rect class="heat" x="{x}" y="{y}" width="{_fmt(cw * f.scale)}" '
                         f'height="{_fmt(ch * f.scale)}" fill="{layer.color}" '
                         f'fill-opacity="{counts[iy, ix] / peak:.4f}"/>')
        return lines
    if isinstance(layer, IsovistLayer):
        return [f'<polygon class="isovist" points="{f.points(layer.boundary)}" fill="{layer.color}" '
                f'fill-opacity="{layer.opacity:.2f}" stroke="{layer.color}"/>']
    if isinstance(layer, PointsLayer):
        pts = np.asarray(layer.points, dtype=float)
        if len(pts) == 0:
            return []
        w = pts[:, 2] / pts[:, 2].max() if pts.shape[1] > 2 and pts[:, 2].max() > 0 else np.ones(len(pts))
        lines = []
        for (x0, y0), wi in zip(pts[:, :2], w):
            x, y = f.xy(x0, y0)
            lines.append(f'<circle class="belief" cx="{x}" cy="{y}" r="{_fmt(layer.radius)}" '
                         f'fill="{layer.color}" fill-opacity="{max(wi, 0.1):.3f}"/>')
        return lines
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def svg_polygon_points(svg: str, css_class: str) -> list[np.ndarray]:
    """Parse back the vertex lists of ``<polygon class=...>`` elements (in SVG units)."""
    import re

    out = []
    for m in re.finditer(rf'<polygon class="{css_class}" points="([^"]*)"', svg):
        out.append(np.array([[float(v) for v in p.split(",")] for p in m.group(1).split()]))
    return out
