import dataclasses
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from nested_pursuit.geometry import Point2
from nested_pursuit.models import (
    AgentVariant,
    ChaserKind,
    PlanningConfig,
    RunnerKind,
    chaser_query,
    naive_chaser_query,
    nested_chaser_weight,
    propose_chaser_future,
    runner_query,
)
from nested_pursuit.rrt import RrtConfig, Trajectory
from nested_pursuit.visibility import IsovistConfig, is_visible
from nested_pursuit.world import bundled_map, map_from_polygons

P = Point2


def small_cfg(world, **kw):
    base = dict(alpha=1.0, horizon_T=8, K=4, L=4)
    base.update(kw)
    return PlanningConfig.for_map(world, **base)


@pytest.fixture(scope="module")
def lane():
    """Empty strip with a runner post at the left end and a far goal."""
    return map_from_polygons(((-10, -10), (110, 10)), [], [("r", (0, 0)), ("far", (100, 0))], (1, 0))


def test_variant_labels_and_models():
    assert AgentVariant(ChaserKind.SMART, RunnerKind.SMARTER).label == "smart/smarter"
    assert AgentVariant(ChaserKind.SMART, RunnerKind.SMARTER).modeled_runner is RunnerKind.NAIVE
    assert AgentVariant(ChaserKind.SMARTEST, RunnerKind.NAIVE).modeled_runner is RunnerKind.SMARTER
    assert len(AgentVariant.all()) == 4


def test_planning_config_validation(bremen):
    with pytest.raises(ValueError):
        PlanningConfig.for_map(bremen, horizon_T=1)
    with pytest.raises(ValueError):
        PlanningConfig.for_map(bremen, K=0)
    with pytest.raises(ValueError):
        PlanningConfig.for_map(bremen, alpha=float("inf"))


# -- naive chaser


def test_naive_chaser_weight_is_one(bremen):
    cfg = small_cfg(bremen)
    rng = np.random.default_rng(0)
    for t in (2, 5, 8):
        out = naive_chaser_query(bremen, bremen.chaser_start, t, cfg, rng)
        assert out.weight == 1.0
        assert out.trajectory.t_first == t and out.trajectory.t_last == 8


def test_naive_chaser_deterministic(bremen):
    cfg = small_cfg(bremen)
    a = naive_chaser_query(bremen, bremen.chaser_start, 3, cfg, np.random.default_rng(5))
    b = naive_chaser_query(bremen, bremen.chaser_start, 3, cfg, np.random.default_rng(5))
    assert a.diagnostics == b.diagnostics
    assert np.array_equal(a.trajectory.positions, b.trajectory.positions)


def test_naive_chaser_goals_uniform(bremen):
    cfg = small_cfg(bremen, horizon_T=3)
    rng = np.random.default_rng(77)
    names = [w.name for w in bremen.waypoints]
    counts = np.zeros(10)
    for _ in range(10_000):
        counts[names.index(naive_chaser_query(bremen, bremen.chaser_start, 2, cfg, rng).diagnostics)] += 1
    assert chisquare(counts).pvalue > 0.01


# -- runner


def test_runner_alpha_zero_weight_one(bremen):
    cfg = small_cfg(bremen, alpha=0.0)
    past = Trajectory.stationary(tuple(bremen.chaser_start), 1, 3)
    rng = np.random.default_rng(1)
    for _ in range(30):
        assert runner_query(bremen, past, 4, cfg, rng, RunnerKind.SMARTER).weight == 1.0


def test_runner_fixture_three_visible_steps(lane):
    # stationary runner at "r"; chaser watches it for steps 1..3, then the
    # imagined chaser leaves for "far" at 10 units per step, out of range
    cfg = PlanningConfig(alpha=0.5, horizon_T=8, K=1, L=1,
                         isovist=IsovistConfig(sight_range=5), rrt=RrtConfig(step_size=1, speed=10),
                         runner_start="r", runner_goal="r", chaser_goal="far")
    past = Trajectory.stationary((1, 0), 1, 3)
    out = runner_query(lane, past, 4, cfg, np.random.default_rng(0), RunnerKind.SMARTER)
    assert out.diagnostics.runner_visible == 3
    assert out.weight == pytest.approx(math.exp(-1.5))
    assert out.weight == pytest.approx(0.22313, abs=1e-5)
    assert out.trajectory.t_first == 4
    assert out.diagnostics.full_path.t_first == 1


def test_runner_seen_every_step_matches_oracle(open_field):
    cfg = small_cfg(open_field, alpha=0.7, isovist=dict(sight_range=100.0))
    past = Trajectory.stationary((20, 2), 1, 4)
    out = runner_query(open_field, past, 5, cfg, np.random.default_rng(2), RunnerKind.SMARTER)
    observer = np.vstack([past.positions, out.diagnostics.imagined_chaser.positions])
    runner = out.diagnostics.full_path.positions
    oracle = sum(is_visible(open_field, P(*o), P(*r), P(*r), cfg.isovist) for o, r in zip(observer, runner))
    assert oracle == cfg.horizon_T
    assert out.weight == pytest.approx(math.exp(-0.7 * cfg.horizon_T))


def test_naive_runner_is_unconditioned(bremen):
    cfg = small_cfg(bremen)
    past = Trajectory.stationary(tuple(bremen.chaser_start), 1, 2)
    out = runner_query(bremen, past, 3, cfg, np.random.default_rng(4), RunnerKind.NAIVE)
    assert out.weight == 1.0
    assert out.diagnostics.imagined_chaser is None


def test_runner_weight_monotone_in_visibility(bremen):
    past = Trajectory.stationary(tuple(bremen.chaser_start), 1, 5)
    for seed in range(15):
        weights, counts = [], []
        for r in (5.0, 15.0, 30.0, 60.0):
            cfg = small_cfg(bremen, isovist=dict(sight_range=r))
            out = runner_query(bremen, past, 6, cfg, np.random.default_rng(seed), RunnerKind.SMARTER)
            weights.append(out.weight)
            counts.append(out.diagnostics.runner_visible)
        assert counts == sorted(counts)
        assert weights == sorted(weights, reverse=True)


# -- chaser


@pytest.mark.parametrize("kind", list(RunnerKind))
def test_chaser_alpha_zero_weight_one(bremen, kind):
    past = Trajectory.stationary(tuple(bremen.chaser_start), 1, 2)
    rng = np.random.default_rng(3)
    for L in (1, 3, 8):
        cfg = small_cfg(bremen, alpha=0.0, L=L)
        assert chaser_query(bremen, past, 3, cfg, rng, kind).weight == 1.0


def test_chaser_single_draw_identity(bremen):
    cfg = small_cfg(bremen, L=1)
    for seed in range(20):
        t = 2 + seed % 5
        past = Trajectory.stationary(tuple(bremen.chaser_start), 1, t - 1)
        out = chaser_query(bremen, past, t, cfg, np.random.default_rng(seed), RunnerKind.SMARTER)
        d = out.diagnostics
        expected = math.exp(cfg.alpha * d.chaser_visible[0]) * math.exp(-cfg.alpha * d.runner_visible[0])
        assert out.weight == expected


def test_chaser_weight_e_fixture(open_field):
    # find a seeded draw with T_chaser = 2 and T_runner = 1, then check the weight
    cfg = small_cfg(open_field, L=1, isovist=dict(sight_range=8.0))
    past = Trajectory.stationary((20, 2), 1, 2)
    for seed in range(500):
        out = chaser_query(open_field, past, 3, cfg, np.random.default_rng(seed), RunnerKind.SMARTER)
        if out.diagnostics.chaser_visible[0] == 2 and out.diagnostics.runner_visible[0] == 1:
            assert out.weight == pytest.approx(math.e, rel=1e-15)
            assert out.weight == pytest.approx(2.71828, abs=1e-5)
            return
    pytest.fail("no fixture draw found")


def test_chaser_weight_is_average_of_terms(bremen):
    cfg = small_cfg(bremen, L=6)
    past = Trajectory.stationary(tuple(bremen.chaser_start), 1, 3)
    out = chaser_query(bremen, past, 4, cfg, np.random.default_rng(9), RunnerKind.SMARTER)
    d = out.diagnostics
    assert np.array_equal(d.chaser_terms, np.exp(cfg.alpha * d.chaser_visible))
    assert out.weight == pytest.approx(np.mean(d.chaser_terms * d.runner_weights), rel=1e-12)


def test_chaser_summand_monotone_in_visibility(bremen):
    past = Trajectory.stationary(tuple(bremen.chaser_start), 1, 3)
    for seed in range(10):
        terms = []
        for r in (5.0, 20.0, 60.0):
            cfg = small_cfg(bremen, isovist=dict(sight_range=r), L=3)
            out = chaser_query(bremen, past, 4, cfg, np.random.default_rng(seed), RunnerKind.NAIVE)
            terms.append(out.diagnostics.chaser_terms)
        assert np.all(terms[0] <= terms[1]) and np.all(terms[1] <= terms[2])


def test_chaser_extends_past_by_one_step(bremen):
    cfg = small_cfg(bremen)
    rng = np.random.default_rng(12)
    past = Trajectory.stationary(tuple(bremen.chaser_start), 1, 1)
    for t in range(2, cfg.horizon_T + 1):
        out = chaser_query(bremen, past, t, cfg, rng, RunnerKind.NAIVE)
        traj = out.trajectory
        assert traj.t_first == 1 and traj.t_last == t
        assert np.array_equal(traj.positions[:-1], past.positions)
        assert np.hypot(*(traj.positions[-1] - past.positions[-1])) <= cfg.rrt.speed + 1e-9
        assert out.diagnostics.future.t_first == t
        assert np.isfinite(out.weight) and out.weight >= 0
        past = traj


def test_chaser_rejects_wrong_past(bremen):
    cfg = small_cfg(bremen)
    with pytest.raises(ValueError):
        chaser_query(bremen, Trajectory.stationary((5, 5), 1, 3), 3, cfg, np.random.default_rng(0))


def test_nested_weight_deterministic(bremen):
    cfg = small_cfg(bremen, L=5)
    past = Trajectory.stationary(tuple(bremen.chaser_start), 1, 2)
    _, future = propose_chaser_future(bremen, past, 3, cfg, np.random.default_rng(0))
    a = nested_chaser_weight(bremen, past, future, 3, cfg, np.random.default_rng(1), RunnerKind.SMARTER)
    b = nested_chaser_weight(bremen, past, future, 3, cfg, np.random.default_rng(1), RunnerKind.SMARTER)
    assert a[0] == b[0]


def test_nested_weight_variance_scales_inverse_with_L():
    world = bundled_map("empty_square")
    cfg = PlanningConfig.for_map(world, alpha=1.0, horizon_T=8, K=1, L=1)
    past = Trajectory.stationary(tuple(world.chaser_start), 1, 2)
    _, future = propose_chaser_future(world, past, 3, cfg, np.random.default_rng(0))
    scaled = {}
    for L in (4, 16, 64):
        w = [nested_chaser_weight(world, past, future, 3, cfg, np.random.default_rng([L, r]),
                                  RunnerKind.SMARTER, L=L)[0] for r in range(100)]
        scaled[L] = np.var(w, ddof=1) * L
    ratios = np.array(list(scaled.values())) / scaled[4]
    assert np.all((ratios > 1 / 3) & (ratios < 3))


def test_pinned_goal_is_used(bremen):
    cfg = dataclasses.replace(small_cfg(bremen), chaser_goal="c")
    out = naive_chaser_query(bremen, bremen.chaser_start, 2, cfg, np.random.default_rng(0))
    assert out.diagnostics == "c"
