"""Flat dotted-key run configuration shared by config files and ``--set`` flags.

A config file is JSON, either flat (``{"planning.alpha": 0.5}``) or nested
(``{"planning": {"alpha": 0.5}}``). ``None`` values for map-scaled settings
(sight range, RRT step and speed) mean "derive from the map".
"""
from __future__ import annotations

import json
import math
from typing import Any, Iterable

from .experiments import BudgetRunConfig, ScenarioConfig
from .models import AgentVariant, ChaserKind, PlanningConfig, RunnerKind
from .smc import ResamplingScheme
from .world import WorldMap

DEFAULTS: dict[str, Any] = {
    "planning.alpha": 1.0,
    "planning.horizon_T": 20,
    "planning.K": 64,
    "planning.L": 8,
    "planning.runner_start": None,
    "planning.runner_goal": None,
    "planning.chaser_goal": None,
    "isovist.sight_range": None,
    "isovist.fov_half_angle": math.radians(22.5),
    "isovist.ray_count": 64,
    "rrt.step_size": None,
    "rrt.goal_bias": 0.05,
    "rrt.goal_tolerance": None,
    "rrt.max_iterations": 5000,
    "rrt.smoothing_iterations": 100,
    "rrt.speed": None,
    "scenario.chaser_kind": "smartest",
    "scenario.runner_kind": "smarter",
    "scenario.restarts": 1,
    "scenario.scheme": "multinomial",
    "scenario.chaser_move": "sample",
    "scenario.fov_override": None,
    "scenario.belief_limit": 64,
    "detect.kl": "128x16",
    "detect.restarts": 50,
    "budget.total_budget": 2048,
    "budget.pairs": "2048x1,512x4,128x16,64x32,32x64,16x128,4x512",
    "budget.restarts": 10,
    "budget.horizon_T": 28,
}


class ConfigError(ValueError):
    pass


def flatten(doc: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in doc.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, full + "."))
        else:
            out[full] = value
    return out


def _check_keys(cfg: dict) -> None:
    unknown = sorted(set(cfg) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")


def load_config(path=None, overrides: Iterable[str] = ()) -> dict:
    """Defaults, then the file, then ``key=value`` overrides (values parsed as JSON when possible)."""
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        file_cfg = flatten(doc)
        _check_keys(file_cfg)
        cfg.update(file_cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _check_keys({key: value})
        cfg[key] = value
    return cfg


def parse_pairs(text: str) -> tuple:
    pairs = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            k, l = part.lower().split("x")
            pairs.append((int(k), int(l)))
        except ValueError as exc:
            raise ConfigError(f"bad (K, L) pair {part!r}; expected e.g. 64x8") from exc
    if not pairs:
        raise ConfigError("no (K, L) pairs given")
    return tuple(pairs)


def planning_config(cfg: dict, world: WorldMap) -> PlanningConfig:
    try:
        return PlanningConfig.for_map(
            world,
            alpha=float(cfg["planning.alpha"]),
            horizon_T=int(cfg["planning.horizon_T"]),
            K=int(cfg["planning.K"]),
            L=int(cfg["planning.L"]),
            isovist=dict(sight_range=cfg["isovist.sight_range"], fov_half_angle=cfg["isovist.fov_half_angle"],
                         ray_count=cfg["isovist.ray_count"]),
            rrt=dict(step_size=cfg["rrt.step_size"], goal_bias=cfg["rrt.goal_bias"],
                     goal_tolerance=cfg["rrt.goal_tolerance"], max_iterations=cfg["rrt.max_iterations"],
                     smoothing_iterations=cfg["rrt.smoothing_iterations"], speed=cfg["rrt.speed"]),
            runner_start=cfg["planning.runner_start"],
            runner_goal=cfg["planning.runner_goal"],
            chaser_goal=cfg["planning.chaser_goal"],
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid planning config: {exc}") from exc


def scenario_options(cfg: dict) -> dict:
    """Keyword options for :class:`ScenarioConfig` besides variant and planning."""
    try:
        return dict(
            scheme=ResamplingScheme(cfg["scenario.scheme"]),
            chaser_move=cfg["scenario.chaser_move"],
            fov_override=cfg["scenario.fov_override"],
            belief_limit=cfg["scenario.belief_limit"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def scenario_config(cfg: dict, world: WorldMap, seed: int) -> ScenarioConfig:
    try:
        variant = AgentVariant(ChaserKind(cfg["scenario.chaser_kind"]), RunnerKind(cfg["scenario.runner_kind"]))
        return ScenarioConfig(variant=variant, planning=planning_config(cfg, world),
                              restarts=int(cfg["scenario.restarts"]), base_seed=seed, map_id=world.map_id,
                              **scenario_options(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def budget_config(cfg: dict) -> BudgetRunConfig:
    try:
        return BudgetRunConfig(total_budget=int(cfg["budget.total_budget"]), pairs=parse_pairs(cfg["budget.pairs"]),
                               restarts=int(cfg["budget.restarts"]), horizon_T=int(cfg["budget.horizon_T"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
