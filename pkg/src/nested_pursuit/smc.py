"""Episode-level sequential Monte Carlo over chaser particles, plus the
weight diagnostics (log mean weights, effective sample size)."""
from __future__ import annotations

import enum
import logging
from concurrent.futures import Executor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .models import AgentVariant, PlanningConfig, WeightedTrajectory, chaser_query
from .rrt import Trajectory
from .world import WorldMap

log = logging.getLogger(__name__)


class AllZeroWeights(ValueError):
    """Every weight is zero: the particle system has fully degenerated."""


class ResamplingScheme(str, enum.Enum):
    MULTINOMIAL = "multinomial"
    SYSTEMATIC = "systematic"


def ess(weights) -> float:
    """Effective sample size (sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or not np.any(w > 0):
        raise AllZeroWeights("effective sample size undefined for all-zero weights")
    # rescale by the max so large weights cannot overflow the squares
    w = w / w.max()
    return float(w.sum() ** 2 / np.dot(w, w))


def resample(weights, K: int, rng: np.random.Generator,
             scheme: ResamplingScheme = ResamplingScheme.MULTINOMIAL) -> np.ndarray:
    """Draw ``K`` ancestor indices (0-based) proportionally to ``weights``."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise AllZeroWeights("cannot resample: all weights are zero")
    p = w / total
    if scheme is ResamplingScheme.MULTINOMIAL:
        return rng.choice(len(w), size=K, p=p)
    positions = (rng.random() + np.arange(K)) / K
    cum = np.cumsum(p)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions, side="right").astype(np.int64)


@dataclass
class StepStats:
    """Pre-resampling weight diagnostics of one SMC step."""

    t: int
    log_z_chaser: float
    log_z_runner: float
    ess: float
    ess_fraction: float
    w_min: float
    w_q25: float
    w_median: float
    w_q75: float
    w_max: float

    def to_dict(self) -> dict:
        return asdict(self)


def budget_stats(w_chaser, w_runner, t: int = 0) -> StepStats:
    """Log mean weights and chaser ESS from the per-(k, l) weight grids.

    ``w_chaser[k, l] = exp(alpha * T_chaser_visible)`` and ``w_runner[k, l]``
    is the runner weight. Grids of shape (R, K, L) are treated as R restarts:
    the log statistics and ESS fraction are averaged over restarts while the
    weight quantiles pool every restart's K particle weights.
    """
    wc = np.asarray(w_chaser, dtype=float)
    wr = np.asarray(w_runner, dtype=float)
    if wc.shape != wr.shape:
        raise ValueError(f"grid shapes differ: {wc.shape} vs {wr.shape}")
    if wc.ndim == 2:
        wc, wr = wc[None], wr[None]
    if wc.ndim != 3:
        raise ValueError("weight grids must be (K, L) or (R, K, L)")
    R, K, L = wc.shape
    particle_w = (wc * wr).mean(axis=2)  # (R, K) chaser weights
    log_zc = np.log(particle_w.mean(axis=1))
    log_zr = np.log(wr.reshape(R, K * L).mean(axis=1))
    ess_r = np.array([ess(pw) for pw in particle_w])
    q = np.quantile(particle_w.ravel(), [0.0, 0.25, 0.5, 0.75, 1.0])
    return StepStats(
        t=t,
        log_z_chaser=float(log_zc.mean()),
        log_z_runner=float(log_zr.mean()),
        ess=float(ess_r.mean()),
        ess_fraction=float((ess_r / K).mean()),
        w_min=float(q[0]),
        w_q25=float(q[1]),
        w_median=float(q[2]),
        w_q75=float(q[3]),
        w_max=float(q[4]),
    )


@dataclass
class ParticleSet:
    particles: list[WeightedTrajectory]
    t: int
    ancestor_history: list[np.ndarray] = field(default_factory=list)
    # weighted proposals of the latest step, before resampling
    proposals: Optional[list[WeightedTrajectory]] = None

    @classmethod
    def initial(cls, world: WorldMap, K: int) -> "ParticleSet":
        start = Trajectory.stationary(world.chaser_start, 1, 1)
        return cls([WeightedTrajectory(start, 1.0) for _ in range(K)], t=1)

    @property
    def K(self) -> int:
        return len(self.particles)

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.particles])


def weight_grids(proposals: Sequence[WeightedTrajectory]) -> tuple[np.ndarray, np.ndarray]:
    """(K, L) grids of chaser terms and runner weights from chaser-query diagnostics."""
    wc = np.stack([p.diagnostics.chaser_terms for p in proposals])
    wr = np.stack([p.diagnostics.runner_weights for p in proposals])
    return wc, wr


def episode_step(state: ParticleSet, world: WorldMap, cfg: PlanningConfig, rng: np.random.Generator,
                 variant: AgentVariant, scheme: ResamplingScheme = ResamplingScheme.MULTINOMIAL,
                 executor: Optional[Executor] = None) -> tuple[ParticleSet, StepStats]:
    """Extend every particle by one chaser query, record diagnostics, resample.

    Particle ``k`` draws from the ``k``-th child stream of ``rng``, so results
    do not depend on whether an executor runs the extensions in parallel.
    """
    t = state.t + 1
    if t > cfg.horizon_T:
        raise ValueError(f"episode already at the horizon T={cfg.horizon_T}")
    K = state.K
    streams = rng.spawn(K)
    kind = variant.modeled_runner

    def extend(k: int) -> WeightedTrajectory:
        return chaser_query(world, state.particles[k].trajectory, t, cfg, streams[k], kind)

    if executor is None:
        proposals = [extend(k) for k in range(K)]
    else:
        proposals = list(executor.map(extend, range(K)))

    wc, wr = weight_grids(proposals)
    weights = np.array([p.weight for p in proposals])
    stats = budget_stats(wc, wr, t=t)
    try:
        ancestors = resample(weights, K, rng, scheme)
    except AllZeroWeights:
        log.warning("all %d particle weights are zero at t=%d; resampling uniformly", K, t)
        ancestors = rng.integers(K, size=K)
    mean_w = float(weights.mean())
    particles = [WeightedTrajectory(proposals[a].trajectory, mean_w, proposals[a].diagnostics) for a in ancestors]
    new = ParticleSet(particles, t, state.ancestor_history + [np.asarray(ancestors, dtype=np.int64)], proposals)
    return new, stats

