"""Ring-buffer replay of environment steps with sequence-window sampling.

Each episode contributes one reset row (is_first, zero action/reward,
initial observation) plus one row per environment step holding the
observation *after* the step together with the action that produced it.
env_steps_total counts step rows only, so the replayed/environment step
ratio uses real interaction counts; windows are sampled over the logical
(monotone) index space, which by construction can never straddle an
eviction seam.
"""

import numpy as np

from .nn import one_hot
from .world_model import WorldModelBatch


class ReplayBuffer:
    def __init__(self, capacity, obs_dim, n_intersections):
        if capacity < 2:
            raise ValueError("capacity too small")
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros((capacity, n_intersections), dtype=np.int8)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.conts = np.zeros(capacity, dtype=np.float32)
        self.is_first = np.zeros(capacity, dtype=bool)
        self.total_appended = 0
        self.env_steps_total = 0
        self.replayed_steps_total = 0

    @property
    def size(self):
        return min(self.total_appended, self.capacity)

    def append(self, obs, prev_action, reward, cont, is_first):
        i = self.total_appended % self.capacity
        self.obs[i] = obs
        self.actions[i] = prev_action
        self.rewards[i] = reward
        self.conts[i] = cont
        self.is_first[i] = is_first
        self.total_appended += 1
        if not is_first:
            self.env_steps_total += 1

    def can_sample(self, length):
        return self.size >= length

    def sample(self, batch_size, length, rng):
        """Uniform T-step windows; may cross episode starts, never seams."""
        if not self.can_sample(length):
            raise ValueError(f"not enough data for windows of length {length}")
        lo = self.total_appended - self.size
        hi = self.total_appended - length
        starts = rng.integers(lo, hi + 1, size=batch_size)
        idx = (starts[:, None] + np.arange(length)) % self.capacity
        actions = self.actions[idx]
        batch = WorldModelBatch(
            obs=self.obs[idx].astype(np.float64),
            actions_onehot=one_hot(actions, 3).reshape(batch_size, length, -1),
            rewards=self.rewards[idx].astype(np.float64),
            conts=self.conts[idx].astype(np.float64),
            is_first=self.is_first[idx].copy(),
        )
        self.replayed_steps_total += batch_size * length
        return batch

    # -- checkpoint support ---------------------------------------------------

    def state_arrays(self):
        """Live rows in logical (oldest to newest) order."""
        lo = self.total_appended - self.size
        idx = (lo + np.arange(self.size)) % self.capacity
        return {
            "obs": self.obs[idx].copy(),
            "actions": self.actions[idx].copy(),
            "rewards": self.rewards[idx].copy(),
            "conts": self.conts[idx].copy(),
            "is_first": self.is_first[idx].copy(),
        }

    def counters(self):
        return {
            "total_appended": self.total_appended,
            "env_steps_total": self.env_steps_total,
            "replayed_steps_total": self.replayed_steps_total,
        }

    def restore(self, arrays, counters):
        total = int(counters["total_appended"])
        rows = arrays["obs"].shape[0]
        if rows != min(total, self.capacity):
            raise ValueError("replay restore: row count does not match counters")
        lo = total - rows
        idx = (lo + np.arange(rows)) % self.capacity
        self.obs[idx] = arrays["obs"]
        self.actions[idx] = arrays["actions"]
        self.rewards[idx] = arrays["rewards"]
        self.conts[idx] = arrays["conts"]
        self.is_first[idx] = arrays["is_first"]
        self.total_appended = total
        self.env_steps_total = int(counters["env_steps_total"])
        self.replayed_steps_total = int(counters["replayed_steps_total"])
