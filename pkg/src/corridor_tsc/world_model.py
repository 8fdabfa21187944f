"""Recurrent state-space world model.

The model state pairs a deterministic recurrent vector h with a sampled
categorical latent z (groups x classes, straight-through gradients). An
encoder embeds symlog observations; the sequence core advances h from
[z, action]; a prior head predicts the next latent from h alone while the
posterior head corrects it with the current embedding. Decoder, two-hot
reward, and continue heads read the concatenated state.

Training minimizes prediction losses plus two KL terms: the dynamics term
pulls the prior toward the (stopped) posterior, the representation term
regularizes the posterior toward the (stopped) prior, both floored by
free bits on the per-step group sum.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import GRUCell, LayerNorm, Linear, MLP, ParamSet, categorical_sample_st, unimix_logits
from .presets import SizePreset
from .tensor import Tensor, grad
from .transforms import BinGrid, symlog, twohot_encode

_ACT = {"silu": T.silu, "tanh": T.tanh, "relu": T.relu}


@dataclass(frozen=True)
class WorldModelConfig:
    obs_dim: int
    n_intersections: int
    deter: int = 64
    hidden: int = 64
    groups: int = 8
    classes: int = 8
    depth: int = 1
    bins: int = 255
    bins_low: float = -20.0
    bins_high: float = 20.0
    unimix: float = 0.01
    free_bits: float = 1.0
    beta_pred: float = 1.0
    beta_dyn: float = 0.5
    beta_rep: float = 0.1
    norm: bool = True
    act: str = "silu"

    @property
    def zdim(self):
        return self.groups * self.classes

    @property
    def action_dim(self):
        return 3 * self.n_intersections

    @property
    def state_dim(self):
        return self.deter + self.zdim

    @classmethod
    def from_preset(cls, preset: SizePreset, obs_dim, n_intersections, **overrides):
        return cls(
            obs_dim=obs_dim,
            n_intersections=n_intersections,
            deter=preset.deter,
            hidden=preset.hidden,
            groups=preset.groups,
            classes=preset.classes,
            depth=preset.depth,
            **overrides,
        )


@dataclass
class LatentState:
    h: Tensor
    z: Tensor  # flattened one-hot groups, [batch, groups*classes]

    def feature(self):
        return T.concat([self.h, self.z], axis=-1)

    @property
    def batch(self):
        return self.h.data.shape[0]


@dataclass
class LossBreakdown:
    decoder_mse: float
    reward_ce: float
    continue_bce: float
    pred: float
    dyn: float
    rep: float
    total: float


@dataclass
class WorldModelBatch:
    """Replay slice [batch, time, ...]; actions are the step's previous action."""

    obs: np.ndarray
    actions_onehot: np.ndarray
    rewards: np.ndarray
    conts: np.ndarray
    is_first: np.ndarray

    def __post_init__(self):
        b, t = self.obs.shape[:2]
        for arr in (self.actions_onehot, self.rewards, self.conts, self.is_first):
            if arr.shape[:2] != (b, t):
                raise ValueError("misaligned batch time axes")

    @property
    def shape(self):
        return self.obs.shape[:2]


class WorldModel:
    def __init__(self, cfg: WorldModelConfig):
        self.cfg = cfg
        self.grid = BinGrid.uniform(cfg.bins, cfg.bins_low, cfg.bins_high)
        self._act = _ACT[cfg.act]
        c = cfg
        self.encoder = MLP("enc", c.obs_dim, c.hidden, c.hidden, c.depth, c.norm, c.act)
        self.proj = Linear("seq_in", c.zdim + c.action_dim, c.hidden, bias=not c.norm)
        self.proj_norm = LayerNorm("seq_in/norm", c.hidden) if c.norm else None
        self.gru = GRUCell("seq", c.hidden, c.deter, norm=c.norm)
        self.prior = MLP("prior", c.deter, c.hidden, c.zdim, c.depth, c.norm, c.act)
        self.posterior = MLP("post", c.deter + c.hidden, c.hidden, c.zdim, c.depth, c.norm, c.act)
        self.decoder = MLP("dec", c.state_dim, c.hidden, c.obs_dim, c.depth, c.norm, c.act)
        self.reward = MLP("rew", c.state_dim, c.hidden, c.bins, c.depth, c.norm, c.act)
        self.cont = MLP("cont", c.state_dim, c.hidden, 1, c.depth, c.norm, c.act)

    def init_params(self, rng, dtype=np.float32):
        ps = ParamSet()
        self.encoder.init(ps, rng, dtype)
        self.proj.init(ps, rng, dtype)
        if self.proj_norm is not None:
            self.proj_norm.init(ps, dtype=dtype)
        self.gru.init(ps, rng, dtype)
        for mod in (self.prior, self.posterior, self.decoder, self.reward, self.cont):
            mod.init(ps, rng, dtype)
        return ps

    # -- state helpers -------------------------------------------------------

    def _zeros_state(self, batch, dtype=np.float32):
        return LatentState(
            h=Tensor(np.zeros((batch, self.cfg.deter), dtype=dtype)),
            z=Tensor(np.zeros((batch, self.cfg.zdim), dtype=dtype)),
        )

    def initial_state(self, ps, batch, rng):
        """h = 0; z sampled from the prior head evaluated at h = 0."""
        state = self._zeros_state(batch)
        logits = self.prior(ps, state.h)
        z = self._latent(logits, rng, sample=True)
        return LatentState(h=state.h, z=z)

    def _latent(self, logits, rng_or_u, sample=True):
        c = self.cfg
        grouped = T.reshape(logits, (-1, c.groups, c.classes))
        log_mixed = unimix_logits(grouped, c.unimix)
        if sample:
            z = categorical_sample_st(log_mixed, rng_or_u)
        else:
            z = T.exp(log_mixed)  # smooth mode for finite-difference checks
        return T.reshape(z, (-1, c.zdim))

    def _advance(self, ps, state: LatentState, action):
        x = self.proj(ps, T.concat([state.z, action], axis=-1))
        if self.proj_norm is not None:
            x = self.proj_norm(ps, x)
        x = self._act(x)
        return self.gru(ps, state.h, x)

    # -- single steps ----------------------------------------------------------

    def observe_step(self, ps, state, prev_action, obs, rng_or_u, is_first=False):
        """Posterior update from one observation; returns (state', prior, post logits)."""
        if is_first:
            state = self._zeros_state(state.batch)
            prev_action = Tensor(np.zeros_like(_data(prev_action)))
        prev_action = _tensor(prev_action)
        h = self._advance(ps, state, prev_action)
        prior_logits = self.prior(ps, h)
        embed = self.encoder(ps, _tensor(symlog(_data(obs)).astype(np.float32)))
        post_logits = self.posterior(ps, T.concat([h, embed], axis=-1))
        z = self._latent(post_logits, rng_or_u, sample=True)
        return LatentState(h=h, z=z), prior_logits, post_logits

    def imagine_step(self, ps, state, action, rng_or_u):
        """Dynamics-only update: latent sampled from the prior head."""
        action = _tensor(action)
        h = self._advance(ps, state, action)
        prior_logits = self.prior(ps, h)
        z = self._latent(prior_logits, rng_or_u, sample=True)
        return LatentState(h=h, z=z)

    def heads(self, ps, feature):
        """(decoded symlog observation, reward bin logits, continue probability)."""
        feature = _tensor(feature)
        decoded = self.decoder(ps, feature)
        reward_logits = self.reward(ps, feature)
        cont_prob = T.sigmoid(self.cont(ps, feature))
        return decoded, reward_logits, cont_prob

    # -- training --------------------------------------------------------------

    def observe_sequence(self, ps, batch: WorldModelBatch, uniforms, sample_latents=True, stop_gradients=True):
        """Scan the batch time-major; returns features and per-step logits.

        uniforms has shape [batch, time, groups]; passing the same slice a
        sequence suffix would receive makes truncated scans bit-comparable.
        The latent fed back into the sequence core is detached so KL and
        prediction errors at later steps never reach the posterior head of
        earlier steps; stop_gradients=False lifts that (and is only meant
        for finite-difference checks, which cannot see stop-gradients).
        """
        c = self.cfg
        b, t_len = batch.shape
        obs_tm = np.ascontiguousarray(batch.obs.transpose(1, 0, 2)).reshape(t_len * b, c.obs_dim)
        obs_tm = symlog(obs_tm).astype(np.float32)
        embed_all = self.encoder(ps, Tensor(obs_tm))
        state = self._zeros_state(b)
        h, z = state.h, state.z
        feats, priors, posts = [], [], []
        for t in range(t_len):
            first = batch.is_first[:, t]
            action = batch.actions_onehot[:, t]
            if first.any():
                keep = (~first).astype(np.float32)[:, None]
                h = T.mul(h, keep)
                z = T.mul(z, keep)
                action = action * keep
            h = self._advance(ps, LatentState(h=h, z=z), Tensor(action))
            priors.append(self.prior(ps, h))
            embed_t = embed_all[t * b : (t + 1) * b]
            post_logits = self.posterior(ps, T.concat([h, embed_t], axis=-1))
            posts.append(post_logits)
            z_live = self._latent(post_logits, uniforms[:, t], sample=sample_latents)
            feats.append(T.concat([h, z_live], axis=-1))
            z = z_live.detach() if stop_gradients else z_live
        return T.concat(feats, axis=0), T.concat(priors, axis=0), T.concat(posts, axis=0), obs_tm

    def _kl_terms(self, prior_logits, post_logits, stop_gradients=True):
        c = self.cfg
        lp_prior = unimix_logits(T.reshape(prior_logits, (-1, c.groups, c.classes)), c.unimix)
        lp_post = unimix_logits(T.reshape(post_logits, (-1, c.groups, c.classes)), c.unimix)
        p_post_t = T.exp(lp_post)
        if stop_gradients:
            p_post = np.exp(lp_post.data)
            # dynamics: KL(sg(post) || prior) trains the prior/sequence side
            dyn_g = T.tsum(T.mul(Tensor(p_post), T.sub(Tensor(lp_post.data), lp_prior)), axis=-1)
            # representation: KL(post || sg(prior)) trains the posterior side
            rep_g = T.tsum(T.mul(p_post_t, T.sub(lp_post, Tensor(lp_prior.data))), axis=-1)
        else:
            kl_g = T.tsum(T.mul(p_post_t, T.sub(lp_post, lp_prior)), axis=-1)
            dyn_g = rep_g = kl_g
        dyn = T.tmean(T.maximum(T.tsum(dyn_g, axis=-1), c.free_bits))
        rep = T.tmean(T.maximum(T.tsum(rep_g, axis=-1), c.free_bits))
        return dyn, rep, dyn_g.data, rep_g.data

    def loss_terms(self, ps, batch: WorldModelBatch, uniforms, sample_latents=True, stop_gradients=True):
        c = self.cfg
        b, t_len = batch.shape
        feats, priors, posts, obs_tm = self.observe_sequence(
            ps, batch, uniforms, sample_latents, stop_gradients
        )
        decoded = self.decoder(ps, feats)
        reward_logits = self.reward(ps, feats)
        cont_logits = T.reshape(self.cont(ps, feats), (-1,))

        diff = T.sub(decoded, obs_tm)
        decoder_mse = T.tmean(T.tsum(T.mul(diff, diff), axis=-1))

        rewards_tm = batch.rewards.T.reshape(-1)
        target = twohot_encode(symlog(rewards_tm), self.grid).astype(np.float32)
        reward_ce = T.tmean(T.neg(T.tsum(T.mul(T.log_softmax(reward_logits), target), axis=-1)))

        conts_tm = batch.conts.T.reshape(-1).astype(np.float32)
        continue_bce = T.tmean(T.bce_with_logits(cont_logits, conts_tm))

        dyn, rep, dyn_groups, rep_groups = self._kl_terms(priors, posts, stop_gradients)
        pred = T.add(T.add(decoder_mse, reward_ce), continue_bce)
        total = T.add(
            T.add(T.mul(pred, c.beta_pred), T.mul(dyn, c.beta_dyn)), T.mul(rep, c.beta_rep)
        )
        terms = {
            "decoder_mse": decoder_mse,
            "reward_ce": reward_ce,
            "continue_bce": continue_bce,
            "pred": pred,
            "dyn": dyn,
            "rep": rep,
            "total": total,
        }
        aux = {"dyn_groups": dyn_groups, "rep_groups": rep_groups, "features": feats.data}
        return terms, aux

    def loss(self, ps, batch, rng, sample_latents=True, uniforms=None):
        """Full training loss with gradients; also returns posterior features."""
        b, t_len = batch.shape
        if uniforms is None:
            uniforms = rng.random((b, t_len, self.cfg.groups))
        terms, aux = self.loss_terms(ps, batch, uniforms, sample_latents)
        grads = grad(terms["total"], ps)
        breakdown = LossBreakdown(
            decoder_mse=terms["decoder_mse"].item(),
            reward_ce=terms["reward_ce"].item(),
            continue_bce=terms["continue_bce"].item(),
            pred=terms["pred"].item(),
            dyn=terms["dyn"].item(),
            rep=terms["rep"].item(),
            total=terms["total"].item(),
        )
        return breakdown, grads, aux["features"]


def _tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)
