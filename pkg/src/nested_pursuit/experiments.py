"""Ground-truth episodes, the detection-rate grid and the (K, L) budget study."""
from __future__ import annotations

import json
import logging
import math
import zlib
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .geometry import Point2
from .models import (
    AgentVariant,
    ChaserKind,
    PlanningConfig,
    RunnerKind,
    naive_chaser_query,
)
from .rrt import Trajectory, sample_trajectory
from .smc import (
    ParticleSet,
    ResamplingScheme,
    StepStats,
    budget_stats,
    episode_step,
    weight_grids,
)
from .visibility import _visible, count_visible_rows
from .world import WorldMap

log = logging.getLogger(__name__)


def derive_rng(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Independent stream for (seed, purpose tag, indices...).

    The tag is hashed with CRC32 so streams are stable across processes and
    Python versions.
    """
    key = (zlib.crc32(tag.encode("utf-8")),) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


@dataclass(frozen=True)
class ScenarioConfig:
    variant: AgentVariant
    planning: PlanningConfig
    restarts: int = 1
    base_seed: int = 0
    map_id: str = "bremen_like"
    scheme: ResamplingScheme = ResamplingScheme.MULTINOMIAL
    chaser_move: str = "sample"  # "sample" (posterior draw) or "argmax"
    fov_override: Optional[float] = None  # half-angle used for ground-truth detection
    belief_limit: Optional[int] = 64  # top-weight imagined runner positions kept per step

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.chaser_move not in ("sample", "argmax"):
            raise ValueError("chaser_move must be 'sample' or 'argmax'")


@dataclass
class EpisodeRecord:
    variant: str
    seed_key: list
    runner_start: str
    runner_goal: str
    chaser_executed: Trajectory
    runner_executed: Trajectory
    detected: bool
    detection_time: Optional[int]
    aim_points: list  # per step t >= 2: [x, y] the detection cone was aimed at
    per_step_stats: list[StepStats]
    belief_snapshots: list  # per step: [[x, y, w], ...]

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "seed_key": list(self.seed_key),
            "runner_start": self.runner_start,
            "runner_goal": self.runner_goal,
            "chaser_executed": self.chaser_executed.positions.tolist(),
            "runner_executed": self.runner_executed.positions.tolist(),
            "detected": self.detected,
            "detection_time": self.detection_time,
            "aim_points": self.aim_points,
            "per_step_stats": [s.to_dict() for s in self.per_step_stats],
            "belief_snapshots": self.belief_snapshots,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "EpisodeRecord":
        return cls(
            variant=doc["variant"],
            seed_key=doc["seed_key"],
            runner_start=doc["runner_start"],
            runner_goal=doc["runner_goal"],
            chaser_executed=Trajectory(np.array(doc["chaser_executed"]), 1),
            runner_executed=Trajectory(np.array(doc["runner_executed"]), 1),
            detected=doc["detected"],
            detection_time=doc["detection_time"],
            aim_points=doc["aim_points"],
            per_step_stats=[StepStats(**s) for s in doc["per_step_stats"]],
            belief_snapshots=doc["belief_snapshots"],
        )


def _smarter_runner_move(world: WorldMap, cfg: PlanningConfig, runner_past: np.ndarray, goal: np.ndarray,
                         chaser_past: Trajectory, t: int, rng: np.random.Generator) -> np.ndarray:
    """The true smarter runner re-plans from where it stands, scores ``L``
    candidate routes against imagined naive chasers and moves along one drawn
    proportionally to weight. Returns its position at time ``t``."""
    T = cfg.horizon_T
    L = cfg.L
    streams = rng.spawn(L)
    moves = np.zeros((L, 2))
    weights = np.zeros(L)
    for l in range(L):
        route, _ = sample_trajectory(world, runner_past[-1], goal, cfg.rrt, t - 1, T, streams[l])
        naive = naive_chaser_query(world, chaser_past.at(t - 1), t, cfg, streams[l])
        runner_full = np.vstack([runner_past, route.positions[1:]])
        observer = np.vstack([chaser_past.positions, naive.trajectory.positions])
        seen, _ = count_visible_rows(observer, runner_full, world, cfg.isovist)
        weights[l] = math.exp(-cfg.alpha * seen)
        moves[l] = route.positions[1]
    total = weights.sum()
    if total > 0:
        pick = int(rng.choice(L, p=weights / total))
    else:
        pick = int(rng.integers(L))
    return moves[pick]


def _belief(proposals, t: int, limit: Optional[int]):
    """Imagined runner positions at time t with weights w_c * w_r, best first."""
    pos = np.concatenate([p.diagnostics.runner_positions for p in proposals])
    wc, wr = weight_grids(proposals)
    w = (wc * wr).ravel()
    order = np.argsort(-w, kind="stable")
    if limit is not None:
        order = order[:limit]
    return pos[order[0]], [[float(pos[i, 0]), float(pos[i, 1]), float(w[i])] for i in order]


def run_episode(world: WorldMap, scenario: ScenarioConfig, rng: np.random.Generator,
                seed_key: Sequence[int] = (), executor: Optional[Executor] = None) -> EpisodeRecord:
    """Play one episode of the true runner against the planning chaser.

    Each step the runner moves first (re-planning if smarter, following its
    committed route if naive), then the chaser runs one SMC step and executes
    one resampled particle's move, then aims its cone at the highest-weight
    imagined runner position and checks the true runner. The first step also
    checks the starting configuration.
    """
    cfg = scenario.planning
    variant = scenario.variant
    T = cfg.horizon_T
    truth_rng, runner_rng, chaser_rng = rng.spawn(3)

    n_wp = len(world.waypoints)
    s_idx, g_idx = (int(i) for i in truth_rng.integers(n_wp, size=2))
    if cfg.runner_start is not None:
        s_idx = world.waypoint_index(cfg.runner_start)
    if cfg.runner_goal is not None:
        g_idx = world.waypoint_index(cfg.runner_goal)
    wps = world.waypoint_array
    runner_goal = wps[g_idx]

    runner_pos = [wps[s_idx].copy()]
    committed = None
    if variant.runner_kind is RunnerKind.NAIVE:
        committed, _ = sample_trajectory(world, wps[s_idx], runner_goal, cfg.rrt, 1, T, runner_rng)

    fov = cfg.isovist.fov_half_angle if scenario.fov_override is None else scenario.fov_override
    sight = cfg.isovist.sight_range
    kernel_obs = world.packed.kernel_args

    def seen(c, r, aim) -> bool:
        return bool(_visible(c[0], c[1], r[0], r[1], aim[0], aim[1], fov, sight, *kernel_obs))

    chaser_pos = [np.array([world.chaser_start.x, world.chaser_start.y])]
    state = ParticleSet.initial(world, cfg.K)
    stats: list[StepStats] = []
    beliefs = []
    aims = []
    detected = False
    detection_time = None
    for t in range(2, T + 1):
        chaser_past = Trajectory(np.array(chaser_pos), 1)
        step_rng = chaser_rng.spawn(1)[0]
        if committed is not None:
            r_next = committed.at(t)
        else:
            r_next = _smarter_runner_move(world, cfg, np.array(runner_pos), runner_goal, chaser_past, t,
                                          runner_rng.spawn(1)[0])

        state, step_stats = episode_step(state, world, cfg, step_rng, variant, scenario.scheme, executor)
        stats.append(step_stats)
        if scenario.chaser_move == "argmax":
            w = np.array([p.weight for p in state.proposals])
            chosen = state.proposals[int(np.argmax(w))]
        else:
            chosen = state.particles[int(step_rng.integers(state.K))]
        c_next = chosen.trajectory.at(t).copy()

        aim, snapshot = _belief(state.proposals, t, scenario.belief_limit)
        aims.append([float(aim[0]), float(aim[1])])
        beliefs.append(snapshot)

        if t == 2 and seen(chaser_pos[0], runner_pos[0], aim):
            detected, detection_time = True, t
        chaser_pos.append(c_next)
        runner_pos.append(np.asarray(r_next, dtype=float).copy())
        if not detected and seen(c_next, runner_pos[-1], aim):
            detected, detection_time = True, t
        if detected:
            break
        # ground truth: every particle continues from the executed past
        executed = Trajectory(np.array(chaser_pos), 1)
        mean_w = float(state.weights.mean())
        state.particles = [type(p)(executed, mean_w, None) for p in state.particles]

    return EpisodeRecord(
        variant=variant.label,
        seed_key=list(seed_key),
        runner_start=world.waypoints[s_idx].name,
        runner_goal=world.waypoints[g_idx].name,
        chaser_executed=Trajectory(np.array(chaser_pos), 1),
        runner_executed=Trajectory(np.array(runner_pos), 1),
        detected=detected,
        detection_time=detection_time,
        aim_points=aims,
        per_step_stats=stats,
        belief_snapshots=beliefs,
    )


def replay_detection(world: WorldMap, record: EpisodeRecord, fov_half_angle: float, sight_range: float) -> Optional[int]:
    """Recompute the detection time of a record from its executed trajectories
    and aim points, independently of the episode loop."""
    C = record.chaser_executed.positions
    R = record.runner_executed.positions
    for i, aim in enumerate(record.aim_points):
        t = i + 2
        checks = [(C[t - 1], R[t - 1])]
        if t == 2:
            checks.insert(0, (C[0], R[0]))
        for c, r in checks:
            if _visible(c[0], c[1], r[0], r[1], aim[0], aim[1], fov_half_angle, sight_range,
                        *world.packed.kernel_args):
                return t
    return None


# ---------------------------------------------------------------------------
# detection grid


@dataclass
class DetectionCell:
    chaser_kind: str
    runner_kind: str
    restarts: int
    detections: int

    @property
    def rate(self) -> float:
        return self.detections / self.restarts if self.restarts else 0.0


@dataclass
class DetectionTable:
    cells: list[DetectionCell]

    def rate(self, chaser: ChaserKind, runner: RunnerKind) -> float:
        for c in self.cells:
            if c.chaser_kind == chaser.value and c.runner_kind == runner.value:
                return c.rate
        raise KeyError((chaser, runner))

    def rows(self) -> list[dict]:
        return [
            dict(chaser_kind=c.chaser_kind, runner_kind=c.runner_kind, restarts=c.restarts,
                 detections=c.detections, rate=c.rate)
            for c in self.cells
        ]

    @classmethod
    def from_records(cls, records: Iterable[EpisodeRecord], variants: Sequence[AgentVariant]) -> "DetectionTable":
        counts = {v.label: [0, 0] for v in variants}
        for r in records:
            counts[r.variant][0] += 1
            counts[r.variant][1] += int(r.detected)
        return cls([
            DetectionCell(v.chaser_kind.value, v.runner_kind.value, counts[v.label][0], counts[v.label][1])
            for v in variants
        ])


def _map_ordered(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def detection_experiment(world: WorldMap, planning: PlanningConfig, restarts: int, base_seed: int = 0,
                         variants: Optional[Sequence[AgentVariant]] = None, workers: int = 1,
                         **scenario_opts) -> tuple[DetectionTable, list[EpisodeRecord]]:
    """Detection rate of every (chaser, runner) variant over seeded restarts.

    Restart ``r`` uses the same seed in every variant, so the hidden runner
    start and goal are shared across the grid (common random numbers).
    """
    variants = list(variants) if variants is not None else AgentVariant.all()
    jobs = [(v, r) for v in variants for r in range(restarts)]

    def play(job):
        v, r = job
        scenario = ScenarioConfig(variant=v, planning=planning, restarts=restarts, base_seed=base_seed,
                                  map_id=world.map_id, **scenario_opts)
        return run_episode(world, scenario, derive_rng(base_seed, "episode", r), seed_key=[base_seed, r])

    records = _map_ordered(play, jobs, workers)
    return DetectionTable.from_records(records, variants), records


# ---------------------------------------------------------------------------
# budget study

DEFAULT_BUDGET_PAIRS = ((2048, 1), (512, 4), (128, 16), (64, 32), (32, 64), (16, 128), (4, 512))


@dataclass(frozen=True)
class BudgetRunConfig:
    total_budget: int = 2048
    pairs: tuple = DEFAULT_BUDGET_PAIRS
    restarts: int = 10
    horizon_T: int = 28

    def __post_init__(self):
        for K, L in self.pairs:
            if K * L != self.total_budget:
                raise ValueError(f"pair ({K}, {L}) does not multiply to the budget {self.total_budget}")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")


@dataclass
class BudgetRow:
    K: int
    L: int
    restart: int
    stats: StepStats
    w_chaser: np.ndarray = field(repr=False)  # (K, L) raw grids, pre-resampling
    w_runner: np.ndarray = field(repr=False)

    def csv_row(self) -> dict:
        s = self.stats
        return dict(K=self.K, L=self.L, restart=self.restart, t=s.t, log_z_chaser=s.log_z_chaser,
                    log_z_runner=s.log_z_runner, ess=s.ess, ess_fraction=s.ess_fraction, w_min=s.w_min,
                    w_q25=s.w_q25, w_median=s.w_median, w_q75=s.w_q75, w_max=s.w_max)


def run_smc_episode(world: WorldMap, cfg: PlanningConfig, variant: AgentVariant, rng: np.random.Generator,
                    scheme: ResamplingScheme = ResamplingScheme.MULTINOMIAL,
                    executor: Optional[Executor] = None, on_step: Optional[Callable] = None) -> ParticleSet:
    """The pure particle-system episode: K chaser particles evolved by
    repeated extend / weight / resample from ``t = 2`` to ``T``."""
    state = ParticleSet.initial(world, cfg.K)
    for _ in range(2, cfg.horizon_T + 1):
        state, stats = episode_step(state, world, cfg, rng.spawn(1)[0], variant, scheme, executor)
        if on_step is not None:
            on_step(state, stats)
    return state


def budget_experiment(world: WorldMap, budget: BudgetRunConfig, planning: PlanningConfig, base_seed: int = 0,
                      variant: Optional[AgentVariant] = None, workers: int = 1) -> list[BudgetRow]:
    """Run the particle system for every (K, L) pair and restart, recording
    per-step weight statistics and the raw weight grids."""
    from dataclasses import replace

    variant = variant or AgentVariant(ChaserKind.SMARTEST, RunnerKind.SMARTER)
    jobs = [(K, L, r) for K, L in budget.pairs for r in range(budget.restarts)]

    def play(job):
        K, L, r = job
        cfg = replace(planning, K=K, L=L, horizon_T=budget.horizon_T)
        rows = []

        def collect(state, stats):
            wc, wr = weight_grids(state.proposals)
            rows.append(BudgetRow(K, L, r, stats, wc, wr))

        run_smc_episode(world, cfg, variant, derive_rng(base_seed, "budget", K, L, r), on_step=collect)
        return rows

    out = []
    for rows in _map_ordered(play, jobs, workers):
        out.extend(rows)
    return out


def summarize_budget(rows: Sequence[BudgetRow]) -> list[dict]:
    """Mean over restarts per (K, L, t), recomputed from the raw grids."""
    groups: dict = {}
    for row in rows:
        groups.setdefault((row.K, row.L, row.stats.t), []).append(row)
    out = []
    for (K, L, t), items in sorted(groups.items()):
        s = budget_stats(np.stack([i.w_chaser for i in items]), np.stack([i.w_runner for i in items]), t=t)
        out.append(dict(K=K, L=L, t=t, restarts=len(items), log_z_chaser=s.log_z_chaser,
                        log_z_runner=s.log_z_runner, ess_fraction=s.ess_fraction))
    return out


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    from scipy.stats import spearmanr

    rho = spearmanr(x, y).statistic
    return 0.0 if rho is None or not np.isfinite(rho) else float(rho)


def trend_summary(rows: Sequence[BudgetRow]) -> dict:
    """Per (K, L): mean over restarts of the rank correlation with t of
    log Z chaser, log Z runner and the chaser ESS fraction."""
    series: dict = {}
    for row in rows:
        series.setdefault((row.K, row.L), {}).setdefault(row.restart, []).append(row.stats)
    out = {}
    for key, by_restart in sorted(series.items()):
        rho_z, rho_zr, rho_e = [], [], []
        for stats in by_restart.values():
            ts = [s.t for s in stats]
            rho_z.append(spearman(ts, [s.log_z_chaser for s in stats]))
            rho_zr.append(spearman(ts, [s.log_z_runner for s in stats]))
            rho_e.append(spearman(ts, [s.ess_fraction for s in stats]))
        out[key] = dict(log_z_chaser=float(np.mean(rho_z)), log_z_runner=float(np.mean(rho_zr)),
                        ess_fraction=float(np.mean(rho_e)))
    return out


def write_ndjson(path, docs: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def read_ndjson(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
