"""Interleaved collect/train loop with strict replayed/env-step accounting.

One process owns one run: act in the environment with exploration
sampling, append to replay, and after every environment step run however
many batch updates the training ratio demands (catch-up scheduler, never
overshooting by more than one op). Episode rewards, loss averages, and
the measured ratio stream to metrics.csv; checkpoints capture parameters,
optimizer moments, replay contents, rng streams, and counters, so a
resumed run continues the unbroken run's metrics rows exactly (wall-clock
column aside).
"""

import os
import time
from dataclasses import asdict

import numpy as np

from .behavior import ActorCritic, BehaviorConfig, ReturnNormalizer, lambda_returns
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .env import CorridorEnv, EnvConfig, encode_observation
from .nn import one_hot
from .optim import adam_step
from .presets import TrainConfig
from .replay import ReplayBuffer
from .scenarios import ScenarioConfig
from .tensor import no_grad
from .world_model import WorldModel, WorldModelConfig

METRICS_COLUMNS = (
    "wall_clock_s",
    "env_steps",
    "episode",
    "episode_reward",
    "wm_loss",
    "actor_loss",
    "critic_loss",
    "measured_ratio",
)
CHECKPOINT_NAME = "checkpoint.ckpt"
METRICS_NAME = "metrics.csv"


class TrainingDiverged(RuntimeError):
    pass


def train_ops_due(env_steps, replayed_steps, ratio, batch_size, batch_length):
    """Batch updates needed to bring replayed/env steps back up to `ratio`."""
    if min(env_steps, replayed_steps) < 0 or ratio <= 0:
        raise ValueError("counters must be non-negative and ratio positive")
    per_op = batch_size * batch_length
    deficit = ratio * env_steps - replayed_steps
    return max(0, deficit // per_op)


def derive_seed(*parts):
    """Stable sub-seed from integer parts (seed, stream id, index...)."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def _fmt(x):
    return repr(float(x))


class TrainRun:
    """All mutable state of one training run; checkpoint/restore round-trips it."""

    def __init__(self, cfg: TrainConfig, out_dir, env_cfg: EnvConfig = None, scenario=None):
        self.cfg = cfg
        self.out_dir = str(out_dir)
        self.env_cfg = env_cfg or EnvConfig()
        self.scenario = (
            scenario
            if isinstance(scenario, ScenarioConfig)
            else ScenarioConfig.load(cfg.scenario, cfg.n_intersections)
        )
        self.env = CorridorEnv(self.scenario, self.env_cfg)
        preset = cfg.preset
        self.wm_cfg = WorldModelConfig.from_preset(preset, self.env.obs_dim, self.env.n_intersections)
        self.wm = WorldModel(self.wm_cfg)
        self.bc = BehaviorConfig(
            state_dim=self.wm_cfg.state_dim,
            n_intersections=self.env.n_intersections,
            hidden=preset.hidden,
            depth=preset.depth,
            horizon=cfg.horizon,
            gamma=cfg.gamma,
            lam=cfg.lam,
            entropy=cfg.entropy,
            slow_ema=cfg.slow_ema,
        )
        self.ac = ActorCritic(self.bc)
        init_rng = np.random.default_rng(derive_seed(cfg.seed, 0))
        self.wm_ps = self.wm.init_params(init_rng)
        self.actor_ps = self.ac.init_actor(init_rng)
        self.critic_ps = self.ac.init_critic(init_rng)
        self.slow_ps = self.ac.init_critic(np.random.default_rng(0))
        self.slow_ps.load_values(self.critic_ps.copy_values())
        self.train_rng = np.random.default_rng(derive_seed(cfg.seed, 1))
        self.buffer = ReplayBuffer(cfg.replay_capacity, self.env.obs_dim, self.env.n_intersections)
        self.normalizer = ReturnNormalizer(decay=cfg.percentile_decay)
        self.episode = 0
        self.wall_base = 0.0
        self._wall_start = None

    # -- paths ---------------------------------------------------------------

    @property
    def metrics_path(self):
        return os.path.join(self.out_dir, METRICS_NAME)

    @property
    def checkpoint_path(self):
        return os.path.join(self.out_dir, CHECKPOINT_NAME)

    def _elapsed(self):
        return self.wall_base + (time.monotonic() - self._wall_start)

    # -- checkpointing ----------------------------------------------------------

    def _collect_arrays(self):
        arrays = {}
        for prefix, ps in (
            ("wm", self.wm_ps),
            ("actor", self.actor_ps),
            ("critic", self.critic_ps),
        ):
            for name, p in ps.items():
                arrays[f"{prefix}/{name}"] = p.data
                arrays[f"{prefix}.m/{name}"] = ps.m[name]
                arrays[f"{prefix}.v/{name}"] = ps.v[name]
        for name, p in self.slow_ps.items():
            arrays[f"slow/{name}"] = p.data
        for name, arr in self.buffer.state_arrays().items():
            arrays[f"replay/{name}"] = arr
        return arrays

    def save(self, path):
        meta = {
            "config": asdict(self.cfg),
            "env_cfg": self.env_cfg.to_dict(),
            "scenario": asdict(self.scenario),
            "episode": self.episode,
            "replay_counters": self.buffer.counters(),
            "rng": self.train_rng.bit_generator.state,
            "normalizer": self.normalizer.state(),
            "adam_steps": {
                "wm": self.wm_ps.steps,
                "actor": self.actor_ps.steps,
                "critic": self.critic_ps.steps,
            },
            "wall_clock_s": self._elapsed() if self._wall_start is not None else self.wall_base,
        }
        save_checkpoint(path, self._collect_arrays(), meta)

    def restore(self, path):
        arrays, meta = load_checkpoint(path)
        saved = dict(meta["config"])
        current = asdict(self.cfg)
        saved.pop("budget"), current.pop("budget")  # resuming may extend the budget
        if saved != current:
            raise CheckpointError("checkpoint config does not match this run's config")
        for prefix, ps in (("wm", self.wm_ps), ("actor", self.actor_ps), ("critic", self.critic_ps)):
            for name, p in ps.items():
                p.data = arrays[f"{prefix}/{name}"].copy()
                ps.m[name] = arrays[f"{prefix}.m/{name}"].copy()
                ps.v[name] = arrays[f"{prefix}.v/{name}"].copy()
                ps.steps[name] = int(meta["adam_steps"][prefix][name])
        for name, p in self.slow_ps.items():
            p.data = arrays[f"slow/{name}"].copy()
        self.buffer.restore(
            {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("replay/")},
            meta["replay_counters"],
        )
        rng_state = meta["rng"]
        self.train_rng = np.random.default_rng()
        self.train_rng.bit_generator.state = rng_state
        self.normalizer.load_state(meta["normalizer"])
        self.episode = int(meta["episode"])
        self.wall_base = float(meta["wall_clock_s"])
        return meta

    # -- training -------------------------------------------------------------

    def _train_op(self):
        cfg = self.cfg
        batch = self.buffer.sample(cfg.batch_size, cfg.batch_length, self.train_rng)
        try:
            breakdown, grads, feats = self.wm.loss(self.wm_ps, batch, self.train_rng)
            if not np.isfinite(breakdown.total):
                raise FloatingPointError("world-model loss is not finite")
            adam_step(self.wm_ps, grads, cfg.wm_lr, clip=cfg.wm_clip)
            traj = self.ac.rollout(
                self.wm, self.wm_ps, self.actor_ps, self.critic_ps, feats, cfg.horizon, self.train_rng
            )
            returns = lambda_returns(traj.rewards, traj.values, traj.continues, cfg.gamma, cfg.lam)
            self.normalizer.update(returns)
            actor_loss, agrads = self.ac.actor_loss(self.actor_ps, traj, returns, self.normalizer)
            adam_step(self.actor_ps, agrads, cfg.ac_lr, clip=cfg.ac_clip)
            critic_loss, cgrads = self.ac.critic_loss(self.critic_ps, self.slow_ps, traj, returns)
            adam_step(self.critic_ps, cgrads, cfg.ac_lr, clip=cfg.ac_clip)
            self.ac.update_slow_critic(self.critic_ps, self.slow_ps)
        except FloatingPointError as e:
            diag = os.path.join(self.out_dir, "diagnostic.ckpt")
            self.save(diag)
            raise TrainingDiverged(f"non-finite training signal: {e}; state saved to {diag}") from e
        return breakdown.total, actor_loss, critic_loss

    def _run_episode(self):
        cfg = self.cfg
        env = self.env
        m = env.n_intersections
        obs = env.reset(derive_seed(cfg.seed, 2, self.episode))
        vec = encode_observation(obs)
        self.buffer.append(vec, np.zeros(m, dtype=np.int8), 0.0, 1.0, True)
        state = self.wm._zeros_state(1)
        prev_onehot = np.zeros((1, 3 * m), dtype=np.float32)
        explore = self.episode >= cfg.prefill_episodes
        ep_reward = 0.0
        losses = {"wm": [], "actor": [], "critic": []}
        for step in range(env.steps_per_episode):
            with no_grad():
                state, _, _ = self.wm.observe_step(
                    self.wm_ps, state, prev_onehot, vec[None, :], self.train_rng, is_first=(step == 0)
                )
                feat = state.feature().data[0]
            if explore:
                action = self.ac.select_action(self.actor_ps, feat, "explore", self.train_rng)
            else:
                action = self.train_rng.integers(0, 3, size=m)
            obs, reward, _ = env.step(action)
            vec = encode_observation(obs)
            # the time limit is not a failure state: the continue target
            # stays 1 and the next episode is marked by its is_first row
            self.buffer.append(vec, action.astype(np.int8), reward, 1.0, False)
            ep_reward += reward
            prev_onehot = one_hot(action, 3).reshape(1, -1)
            if explore and self.buffer.can_sample(cfg.batch_length):
                due = train_ops_due(
                    self.buffer.env_steps_total,
                    self.buffer.replayed_steps_total,
                    cfg.ratio,
                    cfg.batch_size,
                    cfg.batch_length,
                )
                for _ in range(due):
                    wm_l, a_l, c_l = self._train_op()
                    losses["wm"].append(wm_l)
                    losses["actor"].append(a_l)
                    losses["critic"].append(c_l)
            if self.buffer.env_steps_total >= cfg.budget:
                break
        return {
            "episode_reward": ep_reward,
            "wm_loss": float(np.mean(losses["wm"])) if losses["wm"] else float("nan"),
            "actor_loss": float(np.mean(losses["actor"])) if losses["actor"] else float("nan"),
            "critic_loss": float(np.mean(losses["critic"])) if losses["critic"] else float("nan"),
        }

    # -- metrics ------------------------------------------------------------------

    def _truncate_metrics_after_resume(self):
        if not os.path.exists(self.metrics_path):
            return
        with open(self.metrics_path) as f:
            lines = f.read().splitlines()
        kept = [lines[0]] if lines else [",".join(METRICS_COLUMNS)]
        for line in lines[1:]:
            try:
                ep = int(line.split(",")[2])
            except (IndexError, ValueError):
                continue
            if ep <= self.episode:
                kept.append(line)
        with open(self.metrics_path, "w") as f:
            f.write("\n".join(kept) + "\n")

    def _append_metrics_row(self, stats):
        ratio = (
            self.buffer.replayed_steps_total / self.buffer.env_steps_total
            if self.buffer.env_steps_total
            else 0.0
        )
        row = [
            _fmt(self._elapsed()),
            str(self.buffer.env_steps_total),
            str(self.episode),
            _fmt(stats["episode_reward"]),
            _fmt(stats["wm_loss"]),
            _fmt(stats["actor_loss"]),
            _fmt(stats["critic_loss"]),
            _fmt(ratio),
        ]
        with open(self.metrics_path, "a") as f:
            f.write(",".join(row) + "\n")

    # -- entry point ------------------------------------------------------------

    def run(self, resume=False):
        os.makedirs(self.out_dir, exist_ok=True)
        if resume and os.path.exists(self.checkpoint_path):
            self.restore(self.checkpoint_path)
            self._truncate_metrics_after_resume()
        else:
            with open(self.metrics_path, "w") as f:
                f.write(",".join(METRICS_COLUMNS) + "\n")
        self._wall_start = time.monotonic()
        while self.buffer.env_steps_total < self.cfg.budget:
            stats = self._run_episode()
            self.episode += 1
            self._append_metrics_row(stats)
            if self.episode % self.cfg.eval_every == 0:
                self.save(self.checkpoint_path)
        self.save(self.checkpoint_path)
        return self.out_dir


def train_loop(cfg: TrainConfig, out_dir, resume=False, env_cfg=None, scenario=None):
    """Run (or resume) one training run; returns the run directory."""
    return TrainRun(cfg, out_dir, env_cfg=env_cfg, scenario=scenario).run(resume=resume)


# -- evaluation ------------------------------------------------------------------


def rollout_policy_episode(env, wm, wm_ps, ac, actor_ps, seed, rng, mode="eval"):
    """One episode under the policy; returns reward, queue and split traces."""
    obs = env.reset(seed)
    vec = encode_observation(obs)
    m = env.n_intersections
    state = wm._zeros_state(1)
    prev_onehot = np.zeros((1, 3 * m), dtype=np.float32)
    total = 0.0
    queues = np.zeros((env.steps_per_episode, env.n_links), dtype=np.int64)
    splits = np.zeros((env.steps_per_episode, m), dtype=np.int64)
    rewards = np.zeros(env.steps_per_episode, dtype=np.float64)
    with no_grad():
        for step in range(env.steps_per_episode):
            state, _, _ = wm.observe_step(
                wm_ps, state, prev_onehot, vec[None, :], rng, is_first=(step == 0)
            )
            action = ac.select_action(actor_ps, state.feature().data[0], mode, rng)
            obs, reward, _ = env.step(action)
            vec = encode_observation(obs)
            prev_onehot = one_hot(action, 3).reshape(1, -1)
            total += reward
            rewards[step] = reward
            queues[step] = env.ground_truth_queues()
            splits[step] = obs.splits.astype(np.int64)
    return {"episode_reward": total, "queues": queues, "splits": splits, "rewards": rewards}


def run_fixed_split_episode(scenario: ScenarioConfig, seed, env_cfg: EnvConfig = None):
    """Base case: no split adjustments for a whole episode."""
    env = CorridorEnv(scenario, env_cfg or EnvConfig())
    env.reset(seed)
    m = env.n_intersections
    hold = np.ones(m, dtype=np.int64)
    total = 0.0
    queues = np.zeros((env.steps_per_episode, env.n_links), dtype=np.int64)
    splits = np.zeros((env.steps_per_episode, m), dtype=np.int64)
    rewards = np.zeros(env.steps_per_episode, dtype=np.float64)
    for step in range(env.steps_per_episode):
        obs, reward, _ = env.step(hold)
        total += reward
        rewards[step] = reward
        queues[step] = env.ground_truth_queues()
        splits[step] = obs.splits.astype(np.int64)
    return {
        "episode_reward": total,
        "queues": queues,
        "splits": splits,
        "rewards": rewards,
        "link_names": [lk.name for lk in env.sim.geom.main_line],
        "interval_s": env.cfg.control_interval_s,
        "warmup_s": env.cfg.warmup_s,
    }


def load_policy(checkpoint_path, scenario=None):
    """Rebuild env/model/actor from a checkpoint; returns the run shell + meta."""
    arrays, meta = load_checkpoint(checkpoint_path)
    cfg = TrainConfig(**meta["config"])
    sc = ScenarioConfig(**meta["scenario"]) if scenario is None else ScenarioConfig.load(scenario)
    env_cfg = EnvConfig(**meta["env_cfg"])
    run = TrainRun(cfg, out_dir=".", env_cfg=env_cfg, scenario=sc)
    for prefix, ps in (("wm", run.wm_ps), ("actor", run.actor_ps), ("critic", run.critic_ps)):
        for name, p in ps.items():
            p.data = arrays[f"{prefix}/{name}"].copy()
    return run, meta


def evaluate_policy(checkpoint_path, n_episodes=3, seed=0, scenario=None, mode="eval"):
    """Argmax-policy evaluation episodes; no training side effects."""
    run, meta = load_policy(checkpoint_path, scenario)
    episodes = []
    for k in range(n_episodes):
        rng = np.random.default_rng(derive_seed(seed, 3, k))
        episodes.append(
            rollout_policy_episode(
                run.env, run.wm, run.wm_ps, run.ac, run.actor_ps, derive_seed(seed, 4, k), rng, mode
            )
        )
    rewards = [e["episode_reward"] for e in episodes]
    return {
        "episodes": n_episodes,
        "rewards": rewards,
        "mean_reward": float(np.mean(rewards)),
        "min_reward": float(np.min(rewards)),
        "max_reward": float(np.max(rewards)),
        "link_names": [lk.name for lk in run.env.sim.geom.main_line],
        "interval_s": run.env.cfg.control_interval_s,
        "warmup_s": run.env.cfg.warmup_s,
        "traces": episodes,
    }
