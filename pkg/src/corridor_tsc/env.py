"""Queue-based control environment over the corridor simulator.

The agent observes clipped main-line queue lengths plus the current
splits, adjusts each intersection's split by -2/0/+2 seconds once per
100 s interval, and receives a piecewise queue penalty: free below the
light-congestion threshold, linear up to the heavy threshold, and scaled
by a large penalty weight beyond it. Rewards use the unclipped
ground-truth queues; only the observation saturates at the state bound.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .scenarios import ScenarioConfig
from .sim import CorridorSim


@dataclass(frozen=True)
class EnvConfig:
    control_interval_s: int = 100
    queue_upper_bound: int = 50
    light_congestion: int = 10
    heavy_congestion: int = 25
    split_lb: int = 30
    split_ub: int = 70
    delta_split: int = 2
    heavy_penalty: float = 10.0
    episode_length_s: int = 16_200
    warmup_s: int = 1_800

    def __post_init__(self):
        if not (0 < self.light_congestion < self.heavy_congestion < self.queue_upper_bound):
            raise ValueError("congestion thresholds must satisfy 0 < q_lc < q_hc < q_ub")
        if self.split_lb >= self.split_ub or self.delta_split <= 0:
            raise ValueError("invalid split bounds or step")
        if (self.episode_length_s - self.warmup_s) % self.control_interval_s != 0:
            raise ValueError("control horizon must divide the post-warmup time")

    @property
    def steps_per_episode(self):
        return (self.episode_length_s - self.warmup_s) // self.control_interval_s

    def to_dict(self):
        return asdict(self)


@dataclass
class Observation:
    queues: np.ndarray  # L values clipped to [0, q_ub]
    splits: np.ndarray  # M values in [s_lb, s_ub]


@dataclass
class RewardBreakdown:
    per_link: np.ndarray
    total: float


def link_reward(q, weight, cfg: EnvConfig):
    """Piecewise queue penalty; boundary values take the milder branch."""
    if q < 0:
        raise ValueError("queue length must be non-negative")
    if q <= cfg.light_congestion:
        return 0.0
    if q <= cfg.heavy_congestion:
        return -(weight * q)
    return -(cfg.heavy_penalty * weight * q)


def corridor_reward(queues, weights, cfg: EnvConfig):
    per_link = np.array(
        [link_reward(int(q), float(w), cfg) for q, w in zip(queues, weights)], dtype=np.float64
    )
    return RewardBreakdown(per_link=per_link, total=float(per_link.sum()))


def apply_action(splits, action, cfg: EnvConfig):
    """Per-intersection trit: 0 decrease, 1 keep, 2 increase; clamped at bounds."""
    action = np.asarray(action)
    if action.shape != np.asarray(splits).shape or not np.isin(action, (0, 1, 2)).all():
        raise ValueError("action must be a trit vector matching the split vector")
    moved = np.asarray(splits) + (action - 1) * cfg.delta_split
    return np.clip(moved, cfg.split_lb, cfg.split_ub)


def encode_observation(obs: Observation):
    """Flat [queues | splits] vector in fixed link/intersection order."""
    return np.concatenate(
        [np.asarray(obs.queues, dtype=np.float32), np.asarray(obs.splits, dtype=np.float32)]
    )


class CorridorEnv:
    """Episode protocol: warm-up with fixed signals, then fixed-length control."""

    def __init__(self, scenario: ScenarioConfig, cfg: EnvConfig = None):
        self.scenario = scenario
        self.cfg = cfg or EnvConfig()
        if scenario.split_lb != self.cfg.split_lb or scenario.split_ub != self.cfg.split_ub:
            raise ValueError("scenario and env split bounds disagree")
        self.sim: CorridorSim = None
        self._step_count = 0
        self._weights = None

    @property
    def n_intersections(self):
        return self.scenario.n_intersections

    @property
    def n_links(self):
        return 2 * (self.scenario.n_intersections + 1)

    @property
    def obs_dim(self):
        return self.n_links + self.n_intersections

    @property
    def steps_per_episode(self):
        return self.cfg.steps_per_episode

    @property
    def weights(self):
        return self._weights

    def reset(self, seed=0):
        self.sim = CorridorSim(self.scenario, seed=seed)
        self._weights = self.sim.geom.main_line_weights()
        self._step_count = 0
        for m in range(self.n_intersections):
            self.sim.set_split(m, self.scenario.initial_split)
        self.sim.run_interval(self.cfg.warmup_s)
        return self._observe()

    def _observe(self):
        q = np.clip(self.sim.main_line_queues(), 0, self.cfg.queue_upper_bound)
        return Observation(queues=q.astype(np.float64), splits=self.sim.splits())

    def ground_truth_queues(self):
        return self.sim.main_line_queues()

    def step(self, action):
        if self.sim is None:
            raise RuntimeError("reset() before step()")
        if self._step_count >= self.cfg.steps_per_episode:
            raise RuntimeError("episode over; reset() to start a new one")
        new_splits = apply_action(self.sim.splits(), action, self.cfg)
        for m, s in enumerate(new_splits):
            self.sim.set_split(m, int(s))
        self.sim.run_interval(self.cfg.control_interval_s)
        self._step_count += 1
        reward = corridor_reward(self.sim.main_line_queues(), self._weights, self.cfg)
        cont = self._step_count < self.cfg.steps_per_episode
        return self._observe(), reward.total, cont

    def reward_breakdown(self):
        return corridor_reward(self.sim.main_line_queues(), self._weights, self.cfg)
