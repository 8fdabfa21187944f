"""End to end at desk scale: train a small agent for a few episodes,
evaluate the greedy policy against the fixed-split base case, and emit
the report artifacts. Expect a few minutes of CPU.

The equivalent CLI session:

    corridor-tsc baseline --scenario 1 --intersections 2 --out runs/base
    corridor-tsc train --scenario 1 --intersections 2 --size XXS --ratio 32 \
        --budget 2880 --out runs/demo
    corridor-tsc evaluate --checkpoint runs/demo/checkpoint.ckpt --episodes 2 \
        --out runs/demo_eval
    corridor-tsc report --runs runs --out runs/report
"""

import os
import tempfile

from corridor_tsc import ScenarioConfig, TrainConfig, evaluate_policy, run_fixed_split_episode, train_loop
from corridor_tsc.report import emit_run_report, emit_trace_report, write_trace_csv
from corridor_tsc.trainer import derive_seed


def main():
    root = tempfile.mkdtemp(prefix="corridor_demo_")
    cfg = TrainConfig(
        scenario="1", n_intersections=2, size="XXS", ratio=32, seed=5,
        budget=20 * 144, eval_every=10,
    )
    print(f"training {cfg.size} ratio {cfg.ratio} for 20 episodes -> {root}/run")
    train_loop(cfg, os.path.join(root, "run"))

    scenario = ScenarioConfig.builtin(1, 2)
    base = run_fixed_split_episode(scenario, derive_seed(42, 4, 0))
    summary = evaluate_policy(os.path.join(root, "run", "checkpoint.ckpt"), n_episodes=2, seed=42)
    print(f"baseline episode reward : {base['episode_reward']:12.0f}")
    print(f"policy mean reward      : {summary['mean_reward']:12.0f}  "
          f"({(1 - summary['mean_reward'] / base['episode_reward']) * 100:.0f}% less negative)")

    base_dir = os.path.join(root, "baseline")
    os.makedirs(base_dir, exist_ok=True)
    write_trace_csv(os.path.join(base_dir, "trace.csv"), base["queues"], base["link_names"],
                    base["interval_s"], base["warmup_s"])
    report_dir = os.path.join(root, "report")
    emit_run_report(os.path.join(root, "run"), report_dir)
    emit_trace_report(os.path.join(base_dir, "trace.csv"), report_dir, "baseline")
    print(f"report artifacts: {report_dir}")
    for name in sorted(os.listdir(report_dir)):
        print(f"  {name}")


if __name__ == "__main__":
    main()
