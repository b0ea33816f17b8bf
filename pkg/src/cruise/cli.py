"""Command-line entry point: training, evaluation, ablation, export, replay."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import config as cfgmod
from .curriculum import default_schedule
from .errors import ConfigError, CruiseError
from .evaluation import (
    replay_gate_events,
    run_ablation,
    run_evaluation,
    write_metrics_csv,
)
from .nn import load_checkpoint
from .selfplay import run_training, run_vanilla_baseline
from .track import save_track


def _load(args) -> cfgmod.ExperimentConfig:
    if args.config:
        cfg = cfgmod.load_config(args.config)
    else:
        cfg = cfgmod.ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = args.out_dir or os.environ.get("CRUISE_OUT_DIR")
    if out_dir:
        cfg.out_dir = out_dir
    if args.paper_strict:
        cfg.env = dataclasses.replace(cfg.env, paper_strict=True)
    return cfg


def _snapshot(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    cfgmod.save_resolved(cfg, os.path.join(out_dir, "resolved_config.yaml"))


def cmd_train(args) -> int:
    cfg = _load(args)
    _snapshot(cfg, cfg.out_dir)
    bundle = cfgmod.build_bundle(cfg)
    artifacts = run_training(
        bundle,
        cfgmod.build_schedule(cfg),
        cfgmod.build_selfplay_config(cfg),
        cfgmod.build_ppo_config(cfg),
        cfg.seed,
        cfg.out_dir,
        hidden_sizes=tuple(cfg.network.hidden_sizes),
        resume=args.resume,
    )
    print(f"final checkpoint: {artifacts['final_checkpoint']}")
    print(f"total timesteps: {artifacts['total_timesteps']}")
    return 0


def cmd_train_vanilla(args) -> int:
    cfg = _load(args)
    _snapshot(cfg, cfg.out_dir)
    bundle = cfgmod.build_bundle(cfg)
    total = None
    if cfg.curriculum.budgets is not None:
        total = sum(cfg.curriculum.budgets)
    artifacts = run_vanilla_baseline(
        bundle,
        cfgmod.build_selfplay_config(cfg),
        cfgmod.build_ppo_config(cfg),
        cfg.seed,
        cfg.out_dir,
        total_timesteps=total,
        hidden_sizes=tuple(cfg.network.hidden_sizes),
    )
    print(f"final checkpoint: {artifacts['final_checkpoint']}")
    return 0


def _eval_params(cfg):
    ev = cfg.evaluation
    if not ev.checkpoints:
        raise ConfigError("evaluation.checkpoints: at least one checkpoint required")
    paths = list(ev.checkpoints)
    n = cfg.env.num_agents
    if len(paths) == 1:
        paths = paths * n
    if len(paths) != n:
        raise ConfigError("evaluation.checkpoints: need 1 or env.num_agents entries")
    return [load_checkpoint(p) for p in paths]


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    _snapshot(cfg, cfg.out_dir)
    bundle = cfgmod.build_bundle(cfg)
    ev = cfg.evaluation
    stage = next(
        s for s in default_schedule() if s.stage_index == ev.stage_index
    )
    params_list = _eval_params(cfg)
    results, summary = run_evaluation(
        bundle,
        stage,
        params_list,
        ev.episodes,
        ev.seed_base + cfg.seed,
        lap_target=ev.lap_target,
        events_path=os.path.join(cfg.out_dir, "events.jsonl"),
        trajectory_dir=os.path.join(cfg.out_dir, "trajectories"),
    )
    row = {"track": bundle.track.name, "agents": cfg.env.num_agents, **summary.row()}
    write_metrics_csv([row], os.path.join(cfg.out_dir, "metrics.csv"))
    header = list(row.keys())
    print(",".join(header))
    print(",".join(str(row[k]) for k in header))
    return 0


def cmd_ablate(args) -> int:
    cfg = _load(args)
    _snapshot(cfg, cfg.out_dir)
    bundle = cfgmod.build_bundle(cfg)
    schedule = cfgmod.build_schedule(cfg)
    ckpts = list(cfg.evaluation.checkpoints)
    if len(ckpts) != len(schedule):
        raise ConfigError(
            "evaluation.checkpoints: one checkpoint per curriculum stage required"
        )
    rows = run_ablation(
        bundle,
        schedule,
        ckpts,
        cfg.env.num_agents,
        cfg.evaluation.episodes,
        cfg.evaluation.seed_base + cfg.seed,
        lap_target=cfg.evaluation.lap_target,
    )
    write_metrics_csv(rows, os.path.join(cfg.out_dir, "ablation.csv"))
    for row in rows:
        flag = "" if row["monotone_ok"] else "  [velocity did not increase]"
        print(
            f"stage {row['stage']}: velocity {row['velocity_mean']:.3f}"
            f" +- {row['velocity_std']:.3f} m/s, success {row['success_rate']:.1f}%{flag}"
        )
    return 0


def cmd_export_track(args) -> int:
    cfg = _load(args)
    track = cfgmod.build_track(cfg)
    path = args.out or os.path.join(cfg.out_dir, f"{track.name}.track")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    save_track(track, path)
    print(f"wrote {path}")
    return 0


def cmd_replay(args) -> int:
    ok, recomputed, logged = replay_gate_events(args.trajectory)
    print(f"recomputed gate events: {len(recomputed)}, logged: {len(logged)}")
    print("match" if ok else "MISMATCH")
    return 0 if ok else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cruise")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None)
        p.add_argument("--paper-strict", action="store_true",
                       help="disable reward shaping extensions")

    p = sub.add_parser("train", help="run the full curriculum + self-play schedule")
    common(p)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-vanilla", help="train on the final stage only")
    common(p)
    p.set_defaults(func=cmd_train_vanilla)

    p = sub.add_parser("evaluate", help="evaluate checkpoints over seeded episodes")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="evaluate per-stage checkpoints")
    common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-track", help="write track geometry to a file")
    common(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export_track)

    p = sub.add_parser("replay", help="verify logged gate events from a trajectory")
    p.add_argument("trajectory")
    p.set_defaults(func=cmd_replay)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (CruiseError, OSError) as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
