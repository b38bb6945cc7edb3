"""Command-line entry point.

    nested-pursuit simulate --map maps/corridor.json --config c.json --seed 7 --out run1/
    nested-pursuit experiment detect --restarts 30 --kl 64x8 --out det/
    nested-pursuit experiment budget --budget 256 --pairs 256x1,64x4,16x16 --restarts 5 -T 14 --out bud/
    nested-pursuit render --episode run1/episode.ndjson --out run1/episode.svg
    nested-pursuit plan --from a --to b --seed 1
    nested-pursuit isovist --at 10,10 --aim 20,10
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    budget_config,
    load_config,
    parse_pairs,
    planning_config,
    scenario_config,
    scenario_options,
)
from .experiments import (
    DetectionTable,
    EpisodeRecord,
    budget_experiment,
    derive_rng,
    detection_experiment,
    read_ndjson,
    run_episode,
    summarize_budget,
    write_ndjson,
)
from .geometry import Point2
from .models import AgentVariant
from .render import HeatmapLayer, IsovistLayer, PointsLayer, RenderSpec, TrajectoryLayer, render_svg
from .rrt import PlanningFailure, discretize, rrt_plan, shortcut_smooth
from .visibility import isovist
from .world import MapError, bundled_map, bundled_map_names, is_free, load_map_file

log = logging.getLogger("nested_pursuit")

DETECTION_COLUMNS = ["chaser_kind", "runner_kind", "restarts", "detections", "rate"]
BUDGET_COLUMNS = ["K", "L", "restart", "t", "log_z_chaser", "log_z_runner", "ess", "ess_fraction",
                  "w_min", "w_q25", "w_median", "w_q75", "w_max"]
SCHEMAS = {
    "detection_table.csv": {"version": 1, "columns": DETECTION_COLUMNS},
    "budget_stats.csv": {"version": 1, "columns": BUDGET_COLUMNS},
    "budget_summary.csv": {"version": 1, "columns": ["K", "L", "t", "restarts", "log_z_chaser", "log_z_runner",
                                                     "ess_fraction"]},
    "episode.ndjson": {"version": 1},
}


class CliError(Exception):
    pass


def _resolve_map(arg: str | None):
    if arg is None:
        return bundled_map("bremen_like"), None
    path = Path(arg)
    if path.exists():
        try:
            return load_map_file(path), path
        except MapError as exc:
            raise CliError(f"invalid map {arg}: {exc}") from exc
    if os.sep not in arg and not arg.endswith(".json") and arg in bundled_map_names():
        return bundled_map(arg), None
    raise CliError(f"map file not found: {arg}")


def _context(args):
    world, map_path = _resolve_map(args.map)
    try:
        cfg = load_config(args.config, args.set or [])
    except FileNotFoundError as exc:
        raise CliError(f"config file not found: {args.config}") from exc
    return world, map_path, cfg


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args, world, cfg: dict, outputs: list[str]) -> None:
    manifest = {
        "artifact": "nested-pursuit",
        "version": __version__,
        "command": args.command if args.command != "experiment" else f"experiment {args.which}",
        "argv": sys.argv[1:],
        "config": cfg,
        "map_id": world.map_id,
        "map_sha256": world.content_hash(),
        "seed": args.seed,
        "outputs": outputs,
        "schemas": {k: SCHEMAS[k] for k in outputs if k in SCHEMAS},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _executor(threads: int):
    return ThreadPoolExecutor(max_workers=threads) if threads > 1 else nullcontext(None)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    world, _, cfg = _context(args)
    scenario = scenario_config(cfg, world, args.seed)
    out = _out_dir(args)
    outputs = ["episode.ndjson"] + (["frames/"] if args.frames else [])
    _write_manifest(out, args, world, cfg, outputs)
    with _executor(args.threads) as pool:
        record = run_episode(world, scenario, derive_rng(args.seed, "episode", 0), seed_key=[args.seed, 0],
                             executor=pool)
    write_ndjson(out / "episode.ndjson", [record.to_json()])
    if args.frames:
        frames = out / "frames"
        frames.mkdir(exist_ok=True)
        for i in range(len(record.aim_points)):
            t = i + 2
            svg = render_svg(world, episode_render_spec(world, record, scenario.planning, t=t))
            (frames / f"t{t:03d}.svg").write_text(svg, encoding="utf-8")
    status = f"detected at t={record.detection_time}" if record.detected else "not detected"
    print(f"{record.variant}: runner {record.runner_start}->{record.runner_goal}, {status}")
    return 0


def cmd_experiment(args) -> int:
    world, _, cfg = _context(args)
    out = _out_dir(args)
    if args.which == "detect":
        if args.restarts is not None:
            cfg["detect.restarts"] = args.restarts
        if args.kl is not None:
            cfg["detect.kl"] = args.kl
        pairs = parse_pairs(cfg["detect.kl"])
        if len(pairs) != 1:
            raise CliError(f"detection runs a single (K, L) pair, got {cfg['detect.kl']!r}")
        cfg["planning.K"], cfg["planning.L"] = pairs[0]
        if args.T is not None:
            cfg["planning.horizon_T"] = args.T
        planning = planning_config(cfg, world)
        _write_manifest(out, args, world, cfg, ["detection_table.csv", "episodes.ndjson"])
        table, records = detection_experiment(world, planning, int(cfg["detect.restarts"]), base_seed=args.seed,
                                              workers=args.threads, **scenario_options(cfg))
        write_ndjson(out / "episodes.ndjson", [r.to_json() for r in records])
        _write_csv(out / "detection_table.csv", DETECTION_COLUMNS, table.rows())
        for row in table.rows():
            print(f"{row['chaser_kind']:>9} chaser vs {row['runner_kind']:>8} runner: "
                  f"{row['detections']}/{row['restarts']} = {row['rate']:.2f}")
        return 0

    if args.budget is not None:
        cfg["budget.total_budget"] = args.budget
    if args.pairs is not None:
        cfg["budget.pairs"] = args.pairs
    if args.restarts is not None:
        cfg["budget.restarts"] = args.restarts
    if args.T is not None:
        cfg["budget.horizon_T"] = args.T
    budget = budget_config(cfg)
    cfg["planning.horizon_T"] = budget.horizon_T
    planning = planning_config(cfg, world)
    _write_manifest(out, args, world, cfg, ["budget_stats.csv", "budget_summary.csv", "budget_weights.ndjson"])
    rows = budget_experiment(world, budget, planning, base_seed=args.seed, workers=args.threads)
    _write_csv(out / "budget_stats.csv", BUDGET_COLUMNS, [r.csv_row() for r in rows])
    write_ndjson(out / "budget_weights.ndjson", [
        dict(K=r.K, L=r.L, restart=r.restart, t=r.stats.t, w_chaser=r.w_chaser.tolist(), w_runner=r.w_runner.tolist())
        for r in rows
    ])
    summary = summarize_budget(rows)
    _write_csv(out / "budget_summary.csv", SCHEMAS["budget_summary.csv"]["columns"], summary)
    print(f"{len(rows)} rows over {len(budget.pairs)} (K, L) pairs x {budget.restarts} restarts")
    return 0


def episode_render_spec(world, record: EpisodeRecord, planning=None, t: int | None = None,
                        heatmap: bool = False) -> RenderSpec:
    """Layers for one episode: executed paths up to ``t``, and at ``t`` the
    belief cloud and the chaser's detection cone."""
    last = len(record.chaser_executed) if t is None else min(t, len(record.chaser_executed))
    layers = []
    if heatmap:
        layers.append(HeatmapLayer([np.array([p[:2] for p in step]) for step in record.belief_snapshots]))
    layers.append(TrajectoryLayer("chaser", record.chaser_executed.positions[:last], color="#1f5fbf", dashed=True))
    layers.append(TrajectoryLayer("runner", record.runner_executed.positions[:last], color="#c71585"))
    if t is not None and 2 <= t <= len(record.aim_points) + 1:
        layers.append(PointsLayer(np.array(record.belief_snapshots[t - 2])))
        if planning is not None:
            apex = Point2.of(record.chaser_executed.positions[last - 1])
            poly = isovist(world, apex, Point2.of(record.aim_points[t - 2]), planning.isovist)
            layers.append(IsovistLayer(poly.boundary))
    return RenderSpec(layers=layers)


def cmd_render(args) -> int:
    world, _, cfg = _context(args)
    if not args.episode:
        spec = RenderSpec()
    else:
        path = Path(args.episode)
        if not path.exists():
            raise CliError(f"episode file not found: {args.episode}")
        docs = read_ndjson(path)
        if not 0 <= args.index < len(docs):
            raise CliError(f"episode index {args.index} out of range (file holds {len(docs)} records)")
        record = EpisodeRecord.from_json(docs[args.index])
        if args.t is not None and not 2 <= args.t <= len(record.aim_points) + 1:
            raise CliError(f"time step {args.t} not in the record (2..{len(record.aim_points) + 1})")
        spec = episode_render_spec(world, record, planning_config(cfg, world), t=args.t, heatmap=args.heatmap)
    svg = render_svg(world, spec)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(svg, encoding="utf-8")
    else:
        sys.stdout.write(svg)
    return 0


def _point_arg(world, text: str) -> Point2:
    if "," in text:
        try:
            x, y = (float(v) for v in text.split(","))
        except ValueError as exc:
            raise CliError(f"bad point {text!r}; expected x,y") from exc
        return Point2(x, y)
    try:
        return world.waypoint(text).location
    except KeyError as exc:
        raise CliError(f"unknown waypoint {text!r}") from exc


def _emit_json(args, doc) -> None:
    text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_plan(args) -> int:
    world, _, cfg = _context(args)
    planning = planning_config(cfg, world)
    start, goal = _point_arg(world, args.start), _point_arg(world, args.goal)
    for name, p in (("start", start), ("goal", goal)):
        if not is_free(world, p):
            raise CliError(f"{name} ({p.x}, {p.y}) is not in free space")
    rng = derive_rng(args.seed, "plan", 0)
    try:
        raw = rrt_plan(world, start, goal, planning.rrt, rng)
    except PlanningFailure as exc:
        raise CliError(str(exc)) from exc
    smooth = shortcut_smooth(raw, world, planning.rrt, rng)
    traj = discretize(smooth, planning.rrt, 1, planning.horizon_T)
    _emit_json(args, {
        "start": list(start), "goal": list(goal),
        "rrt_path": raw.waypoints.tolist(), "path": smooth.waypoints.tolist(),
        "length": smooth.length, "trajectory": traj.positions.tolist(),
    })
    return 0


def cmd_isovist(args) -> int:
    world, _, cfg = _context(args)
    planning = planning_config(cfg, world)
    apex, aim = _point_arg(world, args.at), _point_arg(world, args.aim)
    poly = isovist(world, apex, aim, planning.isovist)
    _emit_json(args, {
        "apex": list(apex), "aim": list(aim), "sight_range": planning.isovist.sight_range,
        "fov_half_angle": planning.isovist.fov_half_angle, "polygon": poly.boundary.tolist(), "area": poly.area,
    })
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--map", help="map JSON file or bundled map name (default: bremen_like)")
    common.add_argument("--config", help="JSON config file (flat dotted keys or nested)")
    common.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    common.add_argument("--out", help="output directory (or file for render/plan/isovist)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="nested-pursuit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run one ground-truth episode")
    p.add_argument("--frames", action="store_true", help="also write one SVG per step")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="detection grid or (K, L) budget study")
    esub = p.add_subparsers(dest="which", required=True)
    d = esub.add_parser("detect", parents=[common], help="detection rate of the four agent variants")
    d.add_argument("--restarts", type=int, help="episodes per variant (default 50)")
    d.add_argument("--kl", help="particle budget as KxL, e.g. 64x8 (default 128x16)")
    d.add_argument("-T", type=int, dest="T", help="horizon")
    d.set_defaults(func=cmd_experiment)
    b = esub.add_parser("budget", parents=[common], help="log mean weights and ESS over (K, L) pairs")
    b.add_argument("--budget", type=int)
    b.add_argument("--pairs", help="comma-separated KxL pairs")
    b.add_argument("--restarts", type=int)
    b.add_argument("-T", type=int, dest="T", help="horizon")
    b.set_defaults(func=cmd_experiment)

    p = sub.add_parser("render", parents=[common], help="SVG of a map and optionally an episode")
    p.add_argument("--episode", help="episode NDJSON file")
    p.add_argument("--index", type=int, default=0, help="record index within the NDJSON file")
    p.add_argument("--t", type=int, help="time step for belief and isovist layers")
    p.add_argument("--heatmap", action="store_true", help="heat map of imagined runner positions")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("plan", parents=[common], help="one RRT plan as JSON")
    p.add_argument("--from", dest="start", required=True, help="waypoint name or x,y")
    p.add_argument("--to", dest="goal", required=True, help="waypoint name or x,y")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("isovist", parents=[common], help="one isovist polygon as JSON")
    p.add_argument("--at", required=True, help="apex as waypoint name or x,y")
    p.add_argument("--aim", required=True, help="aim point as waypoint name or x,y")
    p.set_defaults(func=cmd_isovist)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except (CliError, ConfigError, MapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
