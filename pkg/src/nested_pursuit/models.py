"""The nested chaser / runner / naive-chaser queries.

Each query returns a weighted sample. The chaser (outer level) proposes its
own future from the RRT prior and scores it against ``L`` runner samples; each
runner (middle level) scores its route against one imagined naive chaser
(inner level). The chaser weight is the average over runners of
``exp(alpha * T_chaser_visible) * w_runner`` with
``w_runner = exp(-alpha * T_runner_visible)`` for a runner that reasons about
the chaser, or 1 for a naive one.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .rrt import RrtConfig, Trajectory, sample_trajectory
from .visibility import IsovistConfig, count_visible_rows
from .world import WorldMap


class ChaserKind(str, enum.Enum):
    SMART = "smart"  # models the runner as naive
    SMARTEST = "smartest"  # models the runner as reasoning about a naive chaser


class RunnerKind(str, enum.Enum):
    NAIVE = "naive"
    SMARTER = "smarter"


@dataclass(frozen=True)
class AgentVariant:
    chaser_kind: ChaserKind
    runner_kind: RunnerKind

    @property
    def modeled_runner(self) -> RunnerKind:
        """The runner model the chaser uses inside its own planning."""
        return RunnerKind.NAIVE if self.chaser_kind is ChaserKind.SMART else RunnerKind.SMARTER

    @property
    def label(self) -> str:
        return f"{self.chaser_kind.value}/{self.runner_kind.value}"

    @classmethod
    def all(cls) -> list["AgentVariant"]:
        return [cls(c, r) for c in ChaserKind for r in RunnerKind]


@dataclass(frozen=True)
class PlanningConfig:
    alpha: float
    horizon_T: int
    K: int
    L: int
    isovist: IsovistConfig
    rrt: RrtConfig
    # optional waypoint-name pins replacing the uniform draws
    runner_start: Optional[str] = None
    runner_goal: Optional[str] = None
    chaser_goal: Optional[str] = None

    def __post_init__(self):
        if self.horizon_T < 2:
            raise ValueError("horizon_T must be at least 2")
        if self.K < 1 or self.L < 1:
            raise ValueError("K and L must be positive")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError("alpha must be finite and nonnegative")

    @classmethod
    def for_map(cls, world: WorldMap, alpha: float = 1.0, horizon_T: int = 20, K: int = 64, L: int = 8,
                isovist: Optional[dict] = None, rrt: Optional[dict] = None, **pins) -> "PlanningConfig":
        return cls(
            alpha=alpha,
            horizon_T=horizon_T,
            K=K,
            L=L,
            isovist=IsovistConfig.for_map(world, **(isovist or {})),
            rrt=RrtConfig.for_map(world, horizon_T, **(rrt or {})),
            **pins,
        )


@dataclass
class WeightedTrajectory:
    trajectory: Trajectory
    weight: float
    diagnostics: Any = None


@dataclass
class RunnerDiagnostics:
    start: str
    goal: str
    full_path: Trajectory  # steps 1..T
    runner_visible: int  # 0 for a naive runner (not evaluated)
    imagined_chaser: Optional[Trajectory]


@dataclass
class ChaserDiagnostics:
    goal: str
    future: Trajectory  # imagined chaser future t..T
    chaser_visible: np.ndarray  # (L,) T^C per runner draw
    runner_visible: np.ndarray  # (L,) T^R per runner draw
    chaser_terms: np.ndarray  # (L,) exp(alpha * T^C)
    runner_weights: np.ndarray  # (L,) runner weights
    runner_positions: np.ndarray  # (L, 2) imagined runner positions at time t
    runner_goals: list = field(default_factory=list)


def _pick_waypoint(world: WorldMap, pinned: Optional[str], rng: np.random.Generator) -> int:
    # the draw is consumed even when pinned so that pins do not shift later streams
    i = int(rng.integers(len(world.waypoints)))
    return world.waypoint_index(pinned) if pinned is not None else i


def naive_chaser_query(world: WorldMap, x_c_prev, t: int, cfg: PlanningConfig,
                       rng: np.random.Generator) -> WeightedTrajectory:
    """Unconditioned chaser future over ``t..T`` starting from ``x_c_prev``; weight 1."""
    T = cfg.horizon_T
    if not 2 <= t <= T:
        raise ValueError(f"t={t} outside [2, {T}]")
    g = _pick_waypoint(world, cfg.chaser_goal, rng)
    traj, _ = sample_trajectory(world, x_c_prev, world.waypoint_array[g], cfg.rrt, t - 1, T, rng)
    return WeightedTrajectory(traj.slice(t, T), 1.0, world.waypoints[g].name)


def runner_query(world: WorldMap, chaser_past: Trajectory, t: int, cfg: PlanningConfig,
                 rng: np.random.Generator, kind: RunnerKind = RunnerKind.SMARTER) -> WeightedTrajectory:
    """Runner route over ``1..T`` weighted by how rarely it is seen.

    The smarter runner imagines a naive chaser continuing from the chaser's
    known past and counts the visible steps over the whole horizon; the naive
    runner is unconditioned. The returned sample is the future slice ``t..T``.
    """
    T = cfg.horizon_T
    if not chaser_past.covers(1, t - 1):
        raise ValueError(f"chaser past must cover steps 1..{t - 1}")
    wps = world.waypoint_array
    s = _pick_waypoint(world, cfg.runner_start, rng)
    g = _pick_waypoint(world, cfg.runner_goal, rng)
    full, _ = sample_trajectory(world, wps[s], wps[g], cfg.rrt, 1, T, rng)
    visible = 0
    imagined = None
    weight = 1.0
    if kind is RunnerKind.SMARTER:
        naive = naive_chaser_query(world, chaser_past.at(t - 1), t, cfg, rng)
        imagined = naive.trajectory
        observer = np.vstack([chaser_past.positions[: t - chaser_past.t_first], imagined.positions])
        visible, _ = count_visible_rows(observer, full.positions, world, cfg.isovist)
        weight = math.exp(-cfg.alpha * visible) * naive.weight
    diag = RunnerDiagnostics(world.waypoints[s].name, world.waypoints[g].name, full, visible, imagined)
    return WeightedTrajectory(full.slice(t, T), weight, diag)


def propose_chaser_future(world: WorldMap, chaser_past: Trajectory, t: int, cfg: PlanningConfig,
                          rng: np.random.Generator) -> tuple[int, Trajectory]:
    """Draw a goal and an RRT future ``t..T`` from the chaser's last position."""
    g = _pick_waypoint(world, cfg.chaser_goal, rng)
    traj, _ = sample_trajectory(world, chaser_past.at(t - 1), world.waypoint_array[g], cfg.rrt,
                                t - 1, cfg.horizon_T, rng)
    return g, traj.slice(t, cfg.horizon_T)


def nested_chaser_weight(world: WorldMap, chaser_past: Trajectory, future: Trajectory, t: int,
                         cfg: PlanningConfig, rng: np.random.Generator, kind: RunnerKind,
                         L: Optional[int] = None) -> tuple[float, dict]:
    """Average over ``L`` runner draws of ``exp(alpha * T_chaser_visible) * w_runner``
    for a fixed chaser future. Each draw gets its own child stream."""
    L = cfg.L if L is None else L
    streams = rng.spawn(L)
    c_vis = np.zeros(L, dtype=np.int64)
    r_vis = np.zeros(L, dtype=np.int64)
    terms = np.zeros(L)
    w_run = np.zeros(L)
    pos = np.zeros((L, 2))
    goals = []
    for l in range(L):
        runner = runner_query(world, chaser_past, t, cfg, streams[l], kind)
        c_vis[l], _ = count_visible_rows(future.positions, runner.trajectory.positions, world, cfg.isovist)
        r_vis[l] = runner.diagnostics.runner_visible
        terms[l] = math.exp(cfg.alpha * c_vis[l])
        w_run[l] = runner.weight
        pos[l] = runner.trajectory.positions[0]
        goals.append(runner.diagnostics.goal)
    # fixed summation order over l
    total = 0.0
    for l in range(L):
        total += terms[l] * w_run[l]
    parts = dict(chaser_visible=c_vis, runner_visible=r_vis, chaser_terms=terms, runner_weights=w_run,
                 runner_positions=pos, runner_goals=goals)
    return total / L, parts


def chaser_query(world: WorldMap, chaser_past: Trajectory, t: int, cfg: PlanningConfig,
                 rng: np.random.Generator, kind: RunnerKind = RunnerKind.SMARTER) -> WeightedTrajectory:
    """One chaser particle extension: the past plus the next position, weighted
    by the nested estimate over ``cfg.L`` imagined runners of type ``kind``."""
    if not chaser_past.covers(1, t - 1) or chaser_past.t_last != t - 1:
        raise ValueError(f"chaser past must cover exactly 1..{t - 1}")
    g, future = propose_chaser_future(world, chaser_past, t, cfg, rng)
    weight, parts = nested_chaser_weight(world, chaser_past, future, t, cfg, rng, kind)
    diag = ChaserDiagnostics(goal=world.waypoints[g].name, future=future, **parts)
    return WeightedTrajectory(chaser_past.extend(future.slice(t, t)), weight, diag)
