"""Command-line entry point.

Subcommands: train one run, run the fixed-split baseline, sweep a
size x ratio x seed grid (isolated subprocesses, resumable via manifest
status), evaluate a checkpoint, and render report artifacts (reward
curves, queue heatmaps) from run directories.
"""

import argparse
import json
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .env import EnvConfig
from .presets import SIZE_PRESETS, TrainConfig
from .report import emit_run_report, emit_trace_report, write_csv, write_splits_csv, write_trace_csv
from .scenarios import ScenarioConfig
from .trainer import (
    TrainingDiverged,
    derive_seed,
    evaluate_policy,
    run_fixed_split_episode,
    train_loop,
)

MANIFEST_NAME = "manifest.json"


def _now():
    return datetime.now(timezone.utc).isoformat()


def _out_dir(args, default_name):
    if args.out:
        return args.out
    root = os.environ.get("CORRIDOR_TSC_OUT", "runs")
    return os.path.join(root, default_name)


def write_manifest(run_dir, command, config, seed, status, started_at=None):
    os.makedirs(run_dir, exist_ok=True)
    path = os.path.join(run_dir, MANIFEST_NAME)
    manifest = {
        "command": command,
        "config": config,
        "code_version": __version__,
        "seed": seed,
        "started_at": started_at or _now(),
        "ended_at": _now() if status in ("completed", "failed") else None,
        "status": status,
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def read_manifest(run_dir):
    path = os.path.join(run_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        return None
    with open(path) as f:
        return json.load(f)


# -- train ---------------------------------------------------------------------


def _train_config_from_args(args, parser):
    try:
        return TrainConfig(
            scenario=args.scenario,
            n_intersections=args.intersections,
            size=args.size,
            ratio=args.ratio,
            batch_size=args.batch_size,
            batch_length=args.batch_length,
            seed=args.seed,
            budget=args.budget,
            eval_every=args.eval_every,
            horizon=args.horizon,
            ac_lr=args.ac_lr,
            wm_lr=args.wm_lr,
        )
    except ValueError as e:
        parser.error(str(e))


def cmd_train(args, parser):
    cfg = _train_config_from_args(args, parser)
    out = _out_dir(args, f"train_s{args.scenario}_{cfg.size}_r{cfg.ratio}_seed{cfg.seed}")
    scenario = ScenarioConfig.load(cfg.scenario, cfg.n_intersections)
    manifest_cfg = {
        "train": asdict(cfg),
        "scenario": asdict(scenario),
        "env": EnvConfig().to_dict(),
    }
    started = _now()
    write_manifest(out, "train", manifest_cfg, cfg.seed, "running", started)
    try:
        train_loop(cfg, out, resume=args.resume, scenario=scenario)
    except (TrainingDiverged, ValueError) as e:
        write_manifest(out, "train", manifest_cfg, cfg.seed, "failed", started)
        print(f"error: {e}", file=sys.stderr)
        return 1
    write_manifest(out, "train", manifest_cfg, cfg.seed, "completed", started)
    print(f"run complete: {out}")
    return 0


# -- baseline --------------------------------------------------------------------


def cmd_baseline(args, parser):
    out = _out_dir(args, f"baseline_s{args.scenario}_seed{args.seed}")
    os.makedirs(out, exist_ok=True)
    scenario = ScenarioConfig.load(args.scenario, args.intersections)
    started = _now()
    manifest_cfg = {"scenario": asdict(scenario), "env": EnvConfig().to_dict()}
    write_manifest(out, "baseline", manifest_cfg, args.seed, "running", started)
    result = run_fixed_split_episode(scenario, derive_seed(args.seed, 4, 0))
    write_trace_csv(
        os.path.join(out, "trace.csv"),
        result["queues"],
        result["link_names"],
        result["interval_s"],
        result["warmup_s"],
    )
    write_splits_csv(
        os.path.join(out, "splits.csv"), result["splits"], result["interval_s"], result["warmup_s"]
    )
    summary = {
        "episode_reward": result["episode_reward"],
        "max_queue": int(result["queues"].max()),
        "max_queue_per_link": {
            name: int(q) for name, q in zip(result["link_names"], result["queues"].max(axis=0))
        },
        "steps": int(result["queues"].shape[0]),
    }
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    write_manifest(out, "baseline", manifest_cfg, args.seed, "completed", started)
    print(f"baseline episode reward: {result['episode_reward']:.1f} (max queue {summary['max_queue']})")
    print(f"artifacts: {out}")
    return 0


# -- evaluate ---------------------------------------------------------------------


def cmd_evaluate(args, parser):
    if not os.path.exists(args.checkpoint):
        parser.error(f"checkpoint not found: {args.checkpoint}")
    out = _out_dir(args, "evaluate")
    os.makedirs(out, exist_ok=True)
    summary = evaluate_policy(
        args.checkpoint, n_episodes=args.episodes, seed=args.seed, scenario=args.scenario
    )
    for k, trace in enumerate(summary["traces"]):
        name = "trace.csv" if k == 0 else f"trace_ep{k + 1:03d}.csv"
        write_trace_csv(
            os.path.join(out, name),
            trace["queues"],
            summary["link_names"],
            summary["interval_s"],
            summary["warmup_s"],
        )
        if k == 0:
            write_splits_csv(
                os.path.join(out, "splits.csv"),
                trace["splits"],
                summary["interval_s"],
                summary["warmup_s"],
            )
    payload = {
        "checkpoint": args.checkpoint,
        "episodes": summary["episodes"],
        "rewards": summary["rewards"],
        "mean_reward": summary["mean_reward"],
        "min_reward": summary["min_reward"],
        "max_reward": summary["max_reward"],
        "max_queue": int(max(t["queues"].max() for t in summary["traces"])),
    }
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    print(f"evaluated {summary['episodes']} episodes: mean reward {summary['mean_reward']:.1f}")
    print(f"artifacts: {out}")
    return 0


# -- sweep -------------------------------------------------------------------------


def _cell_dir(root, size, ratio, seed):
    return os.path.join(root, f"{size}_r{ratio}_seed{seed}")


def _run_cell(pkg_root, cell_args):
    env = dict(os.environ)
    env["PYTHONPATH"] = pkg_root + os.pathsep + env.get("PYTHONPATH", "")
    proc = subprocess.run(
        [sys.executable, "-m", "corridor_tsc", "train", *cell_args],
        env=env,
        capture_output=True,
        text=True,
    )
    return proc.returncode, proc.stdout + proc.stderr


def cmd_sweep(args, parser):
    sizes = args.sizes.split(",")
    for s in sizes:
        if s not in SIZE_PRESETS:
            parser.error(f"unknown size in --sizes: {s}")
    try:
        ratios = [int(r) for r in args.ratios.split(",")]
        seeds = [int(s) for s in args.seeds.split(",")]
    except ValueError:
        parser.error("--ratios and --seeds must be comma-separated integers")
    if any(r <= 0 for r in ratios):
        parser.error("ratios must be positive")
    out = _out_dir(args, f"sweep_s{args.scenario}")
    os.makedirs(out, exist_ok=True)
    pkg_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    cells = [(size, ratio, seed) for size in sizes for ratio in ratios for seed in seeds]
    pending = []
    for size, ratio, seed in cells:
        cell = _cell_dir(out, size, ratio, seed)
        manifest = read_manifest(cell)
        if manifest and manifest.get("status") == "completed":
            print(f"skip completed cell: {cell}")
            continue
        pending.append((size, ratio, seed, cell))
    workers = max(1, args.parallel)
    results = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {}
        for size, ratio, seed, cell in pending:
            cell_args = [
                "--scenario", str(args.scenario),
                "--intersections", str(args.intersections),
                "--size", size,
                "--ratio", str(ratio),
                "--seed", str(seed),
                "--budget", str(args.budget),
                "--batch-size", str(args.batch_size),
                "--batch-length", str(args.batch_length),
                "--out", cell,
            ]
            futures[pool.submit(_run_cell, pkg_root, cell_args)] = (size, ratio, seed, cell)
        for fut, (size, ratio, seed, cell) in futures.items():
            code, log = fut.result()
            results[cell] = code
            if code != 0:
                print(f"cell failed ({code}): {cell}\n{log}", file=sys.stderr)
    summary = summarize_sweep(out, cells)
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print(f"sweep summary: {os.path.join(out, 'summary.json')}")
    return 0 if all(c["status"] == "completed" for c in summary["cells"]) else 1


def summarize_sweep(out, cells, final_window_fraction=0.25):
    """Per-cell final-window mean episode reward, ranked best first."""
    entries = []
    for size, ratio, seed in cells:
        cell = _cell_dir(out, size, ratio, seed)
        manifest = read_manifest(cell)
        status = manifest.get("status") if manifest else "missing"
        entry = {
            "size": size,
            "ratio": ratio,
            "seed": seed,
            "dir": os.path.basename(cell),
            "status": status,
            "episodes": 0,
            "final_window_mean_reward": None,
        }
        metrics = os.path.join(cell, "metrics.csv")
        if os.path.exists(metrics):
            with open(metrics) as f:
                rows = f.read().splitlines()[1:]
            rewards = [float(r.split(",")[3]) for r in rows if r]
            if rewards:
                window = max(1, int(len(rewards) * final_window_fraction))
                entry["episodes"] = len(rewards)
                entry["final_window_mean_reward"] = float(np.mean(rewards[-window:]))
        entries.append(entry)
    ranked = sorted(
        (e for e in entries if e["final_window_mean_reward"] is not None),
        key=lambda e: e["final_window_mean_reward"],
        reverse=True,
    )
    return {
        "final_window_fraction": final_window_fraction,
        "cells": entries,
        "ranking": [e["dir"] for e in ranked],
    }


# -- report -------------------------------------------------------------------------


def cmd_report(args, parser):
    if not os.path.isdir(args.runs):
        parser.error(f"not a directory: {args.runs}")
    out = args.out or os.path.join(args.runs, "report")
    candidates = [args.runs] + [
        os.path.join(args.runs, d) for d in sorted(os.listdir(args.runs))
        if os.path.isdir(os.path.join(args.runs, d))
    ]
    emitted = 0
    for path in candidates:
        label = os.path.basename(os.path.normpath(path))
        if os.path.exists(os.path.join(path, "metrics.csv")):
            emit_run_report(path, out)
            emitted += 1
        if os.path.exists(os.path.join(path, "trace.csv")):
            emit_trace_report(os.path.join(path, "trace.csv"), out, label)
            emitted += 1
    if not emitted:
        print("error: no metrics.csv or trace.csv found under --runs", file=sys.stderr)
        return 1
    print(f"report artifacts in {out}")
    return 0


# -- parser -------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="corridor-tsc",
        description="World-model reinforcement learning for a signalized corridor.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--scenario", default="1", help="1, 2, or a scenario JSON path")
        p.add_argument("--intersections", type=int, default=5, help="corridor size M")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output directory (default under $CORRIDOR_TSC_OUT)")

    p_train = sub.add_parser("train", help="train one run")
    add_common(p_train)
    p_train.add_argument("--size", default="S", choices=sorted(SIZE_PRESETS))
    p_train.add_argument("--ratio", type=int, default=128, help="replayed/env step ratio")
    p_train.add_argument("--budget", type=int, default=2880, help="env-step budget (20 episodes)")
    p_train.add_argument("--batch-size", type=int, default=16)
    p_train.add_argument("--batch-length", type=int, default=64)
    p_train.add_argument("--eval-every", type=int, default=20, help="checkpoint cadence (episodes)")
    p_train.add_argument("--horizon", type=int, default=15)
    p_train.add_argument("--wm-lr", type=float, default=1e-4)
    p_train.add_argument("--ac-lr", type=float, default=3e-5)
    p_train.add_argument("--resume", action="store_true", help="continue from the run's checkpoint")
    p_train.set_defaults(fn=cmd_train)

    p_base = sub.add_parser("baseline", help="fixed-split base case episode")
    add_common(p_base)
    p_base.set_defaults(fn=cmd_baseline)

    p_eval = sub.add_parser("evaluate", help="greedy-policy evaluation of a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--scenario", default=None, help="override the checkpoint's scenario")
    p_eval.add_argument("--episodes", type=int, default=3)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(fn=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="size x ratio x seed grid of training runs")
    add_common(p_sweep)
    p_sweep.add_argument("--sizes", default="XS,S,M,L", help="comma-separated size presets")
    p_sweep.add_argument("--ratios", default="64,128,256,512", help="comma-separated ratios")
    p_sweep.add_argument("--seeds", default="0", help="comma-separated seeds")
    p_sweep.add_argument("--budget", type=int, default=2880)
    p_sweep.add_argument("--batch-size", type=int, default=16)
    p_sweep.add_argument("--batch-length", type=int, default=64)
    p_sweep.add_argument(
        "--parallel", type=int, default=max(1, (os.cpu_count() or 2) - 1),
        help="concurrent cells (default: cores - 1)",
    )
    p_sweep.set_defaults(fn=cmd_sweep)

    p_rep = sub.add_parser("report", help="emit reward curves and queue heatmaps")
    p_rep.add_argument("--runs", required=True, help="directory of run directories")
    p_rep.add_argument("--out", default=None)
    p_rep.set_defaults(fn=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args, parser)


if __name__ == "__main__":
    raise SystemExit(main())
