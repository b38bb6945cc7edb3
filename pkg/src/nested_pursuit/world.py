"""Polygonal city maps with named waypoints."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import BinaryIO, Sequence, Union

import numpy as np

from .geometry import EPS, ObstacleSet, Point2, Polygon, _strictly_inside_any


class MapError(ValueError):
    """Raised for malformed or invalid map documents."""


class MapParseError(MapError):
    pass


class MapValidationError(MapError):
    pass


@dataclass(frozen=True)
class Waypoint:
    name: str
    location: Point2


# a draw from the waypoint set has the same shape as a waypoint
WaypointDraw = Waypoint


@dataclass(frozen=True)
class WorldMap:
    bounds_min: Point2
    bounds_max: Point2
    obstacles: tuple[Polygon, ...]
    waypoints: tuple[Waypoint, ...]
    chaser_start: Point2
    map_id: str = "unnamed"
    packed: ObstacleSet = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "packed", ObstacleSet(self.obstacles))

    @property
    def width(self) -> float:
        return self.bounds_max.x - self.bounds_min.x

    @property
    def height(self) -> float:
        return self.bounds_max.y - self.bounds_min.y

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def bounds_array(self) -> np.ndarray:
        return np.array([self.bounds_min.x, self.bounds_min.y, self.bounds_max.x, self.bounds_max.y])

    @property
    def waypoint_array(self) -> np.ndarray:
        return np.array([(w.location.x, w.location.y) for w in self.waypoints], dtype=float)

    def waypoint(self, name: str) -> Waypoint:
        for w in self.waypoints:
            if w.name == name:
                return w
        raise KeyError(f"no waypoint named {name!r}")

    def waypoint_index(self, name: str) -> int:
        for i, w in enumerate(self.waypoints):
            if w.name == name:
                return i
        raise KeyError(f"no waypoint named {name!r}")

    def in_bounds(self, p: Point2) -> bool:
        return (
            self.bounds_min.x - EPS <= p.x <= self.bounds_max.x + EPS
            and self.bounds_min.y - EPS <= p.y <= self.bounds_max.y + EPS
        )

    def content_hash(self) -> str:
        return hashlib.sha256(dumps_map(self).encode("utf-8")).hexdigest()


def is_free(world: WorldMap, p: Point2) -> bool:
    """Inside the bounds and outside every obstacle interior."""
    if not world.in_bounds(p):
        return False
    return not _strictly_inside_any(float(p.x), float(p.y), *world.packed.kernel_args)


def sample_waypoint(world: WorldMap, rng: np.random.Generator) -> WaypointDraw:
    return world.waypoints[int(rng.integers(len(world.waypoints)))]


def _pair(value, what: str) -> tuple[float, float]:
    try:
        x, y = value
        x, y = float(x), float(y)
    except (TypeError, ValueError) as exc:
        raise MapParseError(f"{what}: expected [x, y], got {value!r}") from exc
    if not (math.isfinite(x) and math.isfinite(y)):
        raise MapParseError(f"{what}: coordinates must be finite")
    return x, y


def parse_map(doc: dict, map_id: str = "unnamed") -> WorldMap:
    """Validate a decoded map document and build a :class:`WorldMap`."""
    if not isinstance(doc, dict):
        raise MapParseError("map document must be a JSON object")
    for key in ("bounds", "obstacles", "waypoints", "chaser_start"):
        if key not in doc:
            raise MapParseError(f"missing key {key!r}")
    try:
        bmin = Point2(*_pair(doc["bounds"]["min"], "bounds.min"))
        bmax = Point2(*_pair(doc["bounds"]["max"], "bounds.max"))
    except (TypeError, KeyError) as exc:
        raise MapParseError("bounds must be {'min': [x, y], 'max': [x, y]}") from exc
    if not (bmax.x > bmin.x and bmax.y > bmin.y):
        raise MapValidationError("bounds: max must exceed min on both axes")

    obstacles = []
    for i, raw in enumerate(doc["obstacles"]):
        if not isinstance(raw, list):
            raise MapParseError(f"obstacle {i}: expected a vertex list")
        coords = [_pair(v, f"obstacle {i}") for v in raw]
        try:
            poly = Polygon.from_coords(coords)
        except ValueError as exc:
            raise MapValidationError(f"obstacle {i}: {exc}") from exc
        for v in poly.vertices:
            if not (bmin.x - EPS <= v.x <= bmax.x + EPS and bmin.y - EPS <= v.y <= bmax.y + EPS):
                raise MapValidationError(f"obstacle {i}: vertex ({v.x}, {v.y}) outside bounds")
        obstacles.append(poly)

    waypoints = []
    seen = set()
    for i, raw in enumerate(doc["waypoints"]):
        try:
            name = str(raw["name"])
            pos = raw["pos"]
        except (TypeError, KeyError) as exc:
            raise MapParseError(f"waypoint {i}: expected {{'name': ..., 'pos': [x, y]}}") from exc
        if name in seen:
            raise MapValidationError(f"waypoint {name!r}: duplicate name")
        seen.add(name)
        waypoints.append(Waypoint(name, Point2(*_pair(pos, f"waypoint {name!r}"))))
    if len(waypoints) < 2:
        raise MapValidationError(f"map needs at least 2 waypoints, got {len(waypoints)}")

    world = WorldMap(
        bounds_min=bmin,
        bounds_max=bmax,
        obstacles=tuple(obstacles),
        waypoints=tuple(waypoints),
        chaser_start=Point2(*_pair(doc["chaser_start"], "chaser_start")),
        map_id=map_id,
    )
    for w in world.waypoints:
        if not is_free(world, w.location):
            raise MapValidationError(f"waypoint {w.name!r} is outside the bounds or inside an obstacle")
    if not is_free(world, world.chaser_start):
        raise MapValidationError("chaser_start is outside the bounds or inside an obstacle")
    return world


def load_map(source: Union[BinaryIO, bytes, str], map_id: str = "unnamed") -> WorldMap:
    """Load a map from a byte stream, raw bytes, or a JSON string."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MapParseError(f"map is not valid UTF-8: {exc}") from exc
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise MapParseError(f"malformed map JSON: {exc}") from exc
    return parse_map(doc, map_id=map_id)


def load_map_file(path, map_id: str | None = None) -> WorldMap:
    from pathlib import Path

    path = Path(path)
    with open(path, "rb") as fh:
        return load_map(fh, map_id=map_id or path.name.split(".")[0])


def bundled_map_names() -> list[str]:
    files = resources.files("nested_pursuit").joinpath("maps").iterdir()
    return sorted(f.name[: -len(".map.json")] for f in files if f.name.endswith(".map.json"))


def bundled_map(name: str = "bremen_like") -> WorldMap:
    ref = resources.files("nested_pursuit").joinpath("maps", f"{name}.map.json")
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled map {name!r}; available: {bundled_map_names()}")
    return load_map(ref.read_bytes(), map_id=name)


def map_to_doc(world: WorldMap) -> dict:
    return {
        "bounds": {"min": [world.bounds_min.x, world.bounds_min.y], "max": [world.bounds_max.x, world.bounds_max.y]},
        "obstacles": [[[v.x, v.y] for v in poly.vertices] for poly in world.obstacles],
        "waypoints": [{"name": w.name, "pos": [w.location.x, w.location.y]} for w in world.waypoints],
        "chaser_start": [world.chaser_start.x, world.chaser_start.y],
    }


def dumps_map(world: WorldMap) -> str:
    return json.dumps(map_to_doc(world), sort_keys=True)


def map_from_polygons(
    bounds: tuple[tuple[float, float], tuple[float, float]],
    obstacles: Sequence,
    waypoints: Sequence[tuple[str, tuple[float, float]]],
    chaser_start: tuple[float, float],
    map_id: str = "inline",
) -> WorldMap:
    """Convenience constructor going through the same validation as files."""
    doc = {
        "bounds": {"min": list(bounds[0]), "max": list(bounds[1])},
        "obstacles": [[list(v) for v in poly] for poly in obstacles],
        "waypoints": [{"name": n, "pos": list(p)} for n, p in waypoints],
        "chaser_start": list(chaser_start),
    }
    return parse_map(doc, map_id=map_id)
