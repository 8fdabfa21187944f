"""Actor-critic trained purely on imagined latent rollouts.

The actor factorizes into one 3-way categorical per intersection; the
critic regresses lambda-returns through a two-hot head. Rollouts run
gradient-free: losses are recomputed afterward on the recorded states, so
actor updates cannot leak into the world model or critic and vice versa.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import MLP, ParamSet, categorical_draw, one_hot, unimix_logits
from .tensor import Tensor, grad, no_grad
from .transforms import BinGrid, decode_scalar_logits, symlog, twohot_encode


@dataclass(frozen=True)
class BehaviorConfig:
    state_dim: int
    n_intersections: int
    hidden: int = 64
    depth: int = 1
    bins: int = 255
    bins_low: float = -20.0
    bins_high: float = 20.0
    unimix: float = 0.01
    horizon: int = 15
    gamma: float = 0.997
    lam: float = 0.95
    entropy: float = 3e-4
    slow_ema: float = 0.02
    norm: bool = True
    act: str = "silu"


@dataclass
class ImaginedTrajectory:
    """Horizon-major arrays: states/values cover H+1 points, rewards H steps."""

    states: np.ndarray  # [H+1, N, state_dim]
    actions: np.ndarray  # [H, N, M] trit indices
    rewards: np.ndarray  # [H, N]; reward decoded at the arrival state
    continues: np.ndarray  # [H, N] in (0, 1)
    values: np.ndarray  # [H+1, N]

    @property
    def horizon(self):
        return self.actions.shape[0]


class ReturnNormalizer:
    """EMA of batch return percentiles; scale = max(1, p95 - p5)."""

    def __init__(self, decay=0.99, low_pct=5.0, high_pct=95.0):
        self.decay = decay
        self.low_pct = low_pct
        self.high_pct = high_pct
        self.low = 0.0
        self.high = 0.0
        self.initialized = False

    def update(self, returns):
        lo, hi = np.percentile(np.asarray(returns, dtype=np.float64), [self.low_pct, self.high_pct])
        if not self.initialized:
            self.low, self.high = float(lo), float(hi)
            self.initialized = True
        else:
            self.low = self.decay * self.low + (1.0 - self.decay) * float(lo)
            self.high = self.decay * self.high + (1.0 - self.decay) * float(hi)

    @property
    def scale(self):
        return max(1.0, self.high - self.low)

    def state(self):
        return {
            "low": self.low,
            "high": self.high,
            "initialized": float(self.initialized),
            "decay": self.decay,
        }

    def load_state(self, state):
        self.low = float(state["low"])
        self.high = float(state["high"])
        self.initialized = bool(state["initialized"])
        self.decay = float(state.get("decay", self.decay))


class ActorCritic:
    def __init__(self, cfg: BehaviorConfig):
        self.cfg = cfg
        self.grid = BinGrid.uniform(cfg.bins, cfg.bins_low, cfg.bins_high)
        self.actor = MLP(
            "actor", cfg.state_dim, cfg.hidden, 3 * cfg.n_intersections, cfg.depth, cfg.norm, cfg.act
        )
        self.critic = MLP("critic", cfg.state_dim, cfg.hidden, cfg.bins, cfg.depth, cfg.norm, cfg.act)

    def init_actor(self, rng, dtype=np.float32):
        ps = ParamSet()
        self.actor.init(ps, rng, dtype)
        return ps

    def init_critic(self, rng, dtype=np.float32):
        ps = ParamSet()
        self.critic.init(ps, rng, dtype)
        return ps

    # -- policy ------------------------------------------------------------

    def actor_logprobs(self, ps, states):
        """Log-probs of the unimixed per-intersection categoricals, [N, M, 3]."""
        logits = self.actor(ps, states if isinstance(states, Tensor) else Tensor(states))
        grouped = T.reshape(logits, (-1, self.cfg.n_intersections, 3))
        return unimix_logits(grouped, self.cfg.unimix)

    def policy_probs(self, ps, states):
        with no_grad():
            return np.exp(self.actor_logprobs(ps, states).data)

    def select_action(self, ps, state_feature, mode, rng=None):
        """Trit vector per intersection: explore samples, eval takes the argmax."""
        if mode not in ("explore", "eval"):
            raise ValueError(f"unknown action mode: {mode}")
        feat = np.asarray(state_feature, dtype=np.float32).reshape(1, -1)
        probs = self.policy_probs(ps, feat)[0]
        if mode == "eval":
            return probs.argmax(axis=-1)
        return categorical_draw(probs, rng.random(self.cfg.n_intersections))

    def values_of(self, ps, states):
        with no_grad():
            logits = self.critic(ps, Tensor(np.asarray(states, dtype=np.float32)))
            return decode_scalar_logits(logits.data, self.grid)

    # -- imagination ---------------------------------------------------------

    def rollout(self, wm, wm_ps, actor_ps, critic_ps, start_features, horizon, rng):
        """Imagine `horizon` steps from every start state under the actor."""
        cfg = self.cfg
        starts = np.asarray(start_features, dtype=np.float32)
        n = starts.shape[0]
        deter = wm.cfg.deter
        states = np.empty((horizon + 1, n, starts.shape[1]), dtype=np.float32)
        actions = np.empty((horizon, n, cfg.n_intersections), dtype=np.int64)
        rewards = np.empty((horizon, n), dtype=np.float64)
        continues = np.empty((horizon, n), dtype=np.float64)
        states[0] = starts
        with no_grad():
            from .world_model import LatentState  # local import to avoid a cycle

            state = LatentState(h=Tensor(starts[:, :deter]), z=Tensor(starts[:, deter:]))
            for t in range(horizon):
                probs = self.policy_probs(actor_ps, states[t])
                trits = categorical_draw(probs, rng.random((n, cfg.n_intersections)))
                actions[t] = trits
                a_onehot = one_hot(trits, 3).reshape(n, -1)
                state = wm.imagine_step(wm_ps, state, a_onehot, rng)
                feat = state.feature().data
                states[t + 1] = feat
                rewards[t] = decode_scalar_logits(wm.reward(wm_ps, Tensor(feat)).data, wm.grid)
                continues[t] = _sigmoid(wm.cont(wm_ps, Tensor(feat)).data[:, 0])
            values = self.values_of(critic_ps, states.reshape(-1, starts.shape[1]))
        return ImaginedTrajectory(
            states=states,
            actions=actions,
            rewards=rewards,
            continues=continues,
            values=values.reshape(horizon + 1, n),
        )

    # -- losses -----------------------------------------------------------------

    def trajectory_weights(self, traj):
        """Cumulative discount: w_0 = 1, w_t = prod_{i<t} gamma * c_i."""
        h, n = traj.rewards.shape
        w = np.ones((h, n), dtype=np.float64)
        for t in range(1, h):
            w[t] = w[t - 1] * self.cfg.gamma * traj.continues[t - 1]
        return w

    def actor_loss(self, actor_ps, traj, returns, normalizer, entropy_coef=None):
        """REINFORCE on imagined steps with normalized stop-gradient advantages."""
        cfg = self.cfg
        eta = cfg.entropy if entropy_coef is None else entropy_coef
        h, n = returns.shape
        flat_states = traj.states[:h].reshape(h * n, -1)
        lp = self.actor_logprobs(actor_ps, flat_states)
        chosen = one_hot(traj.actions.reshape(h * n, -1), 3)
        logp = T.tsum(T.tsum(T.mul(lp, chosen), axis=-1), axis=-1)
        entropy = T.neg(T.tsum(T.tsum(T.mul(T.exp(lp), lp), axis=-1), axis=-1))
        adv = ((returns - traj.values[:h]) / normalizer.scale).reshape(-1).astype(np.float32)
        weights = self.trajectory_weights(traj).reshape(-1).astype(np.float32)
        per_step = T.add(T.mul(logp, adv), T.mul(entropy, eta))
        loss = T.neg(T.tmean(T.mul(per_step, weights)))
        grads = grad(loss, actor_ps)
        return loss.item(), grads

    def critic_loss(self, critic_ps, slow_ps, traj, returns):
        """Two-hot cross-entropy to lambda-returns plus a slow-critic regularizer."""
        h, n = returns.shape
        flat_states = traj.states[:h].reshape(h * n, -1)
        logits = self.critic(critic_ps, Tensor(flat_states))
        logp = T.log_softmax(logits)
        target = twohot_encode(symlog(returns.reshape(-1)), self.grid).astype(np.float32)
        ce = T.neg(T.tsum(T.mul(logp, target), axis=-1))
        with no_grad():
            slow_logits = self.critic(slow_ps, Tensor(flat_states)).data
        slow_probs = _softmax(slow_logits).astype(np.float32)
        reg = T.neg(T.tsum(T.mul(logp, slow_probs), axis=-1))
        weights = self.trajectory_weights(traj).reshape(-1).astype(np.float32)
        loss = T.tmean(T.mul(T.add(ce, reg), weights))
        grads = grad(loss, critic_ps)
        return loss.item(), grads

    def update_slow_critic(self, critic_ps, slow_ps, rate=None):
        rate = self.cfg.slow_ema if rate is None else rate
        for name, p in slow_ps.items():
            p.data *= 1.0 - rate
            p.data += rate * critic_ps[name].data


def lambda_returns(rewards, values, continues, gamma, lam):
    """R_t = r_t + gamma c_t [(1 - lam) V_{t+1} + lam R_{t+1}], R_H = V_H.

    rewards/continues: [H, ...]; values: [H+1, ...]; returns [H, ...].
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    continues = np.asarray(continues, dtype=np.float64)
    if not (0.0 <= gamma <= 1.0 and 0.0 <= lam <= 1.0):
        raise ValueError("gamma and lambda must lie in [0, 1]")
    h = rewards.shape[0]
    if values.shape[0] != h + 1 or continues.shape[0] != h:
        raise ValueError("lambda_returns: misaligned horizon axes")
    out = np.empty_like(rewards)
    nxt = values[h]
    for t in range(h - 1, -1, -1):
        out[t] = rewards[t] + gamma * continues[t] * ((1.0 - lam) * values[t + 1] + lam * nxt)
        nxt = out[t]
    return out


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
