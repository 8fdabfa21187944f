"""Train the recurrent latent world model on random-policy experience and
watch the losses fall; then roll the dynamics forward in imagination and
compare decoded reward predictions against the environment.
"""

import time

import numpy as np

from corridor_tsc import (
    CorridorEnv,
    EnvConfig,
    ReplayBuffer,
    ScenarioConfig,
    SIZE_PRESETS,
    WorldModel,
    WorldModelConfig,
    adam_step,
    encode_observation,
)
from corridor_tsc.transforms import decode_scalar_logits
from corridor_tsc.tensor import Tensor, no_grad


def collect(episodes=4, seed=0):
    rng = np.random.default_rng(seed)
    env = CorridorEnv(ScenarioConfig.builtin(1, 2), EnvConfig())
    buf = ReplayBuffer(50_000, env.obs_dim, env.n_intersections)
    for ep in range(episodes):
        obs = env.reset(seed=ep)
        buf.append(encode_observation(obs), np.zeros(2), 0.0, 1.0, True)
        for _ in range(env.steps_per_episode):
            a = rng.integers(0, 3, size=2)
            obs, r, _ = env.step(a)
            buf.append(encode_observation(obs), a, r, 1.0, False)
    return env, buf, rng


def main():
    env, buf, rng = collect()
    print(f"collected {buf.size} replay rows from a random policy")
    preset = SIZE_PRESETS["XXS"]
    cfg = WorldModelConfig.from_preset(preset, env.obs_dim, env.n_intersections)
    wm = WorldModel(cfg)
    ps = wm.init_params(np.random.default_rng(1))
    t0 = time.perf_counter()
    for step in range(300):
        batch = buf.sample(16, 64, rng)
        breakdown, grads, feats = wm.loss(ps, batch, rng)
        adam_step(ps, grads, 1e-4, clip=1000.0)
        if step % 50 == 0:
            print(f"  step {step:3d}  total {breakdown.total:8.2f}  decode {breakdown.decoder_mse:7.2f} "
                  f"reward {breakdown.reward_ce:5.2f}  dyn {breakdown.dyn:4.2f}")
    print(f"300 updates in {time.perf_counter() - t0:.0f} s")

    # imagination: step the prior forward from trained posterior states
    with no_grad():
        batch = buf.sample(8, 32, rng)
        _, _, feats = wm.loss(ps, batch, rng)
        from corridor_tsc.world_model import LatentState

        state = LatentState(h=Tensor(feats[-8:, : cfg.deter]), z=Tensor(feats[-8:, cfg.deter :]))
        hold = np.tile(np.array([0.0, 1.0, 0.0], dtype=np.float32), (8, env.n_intersections))
        print("\nimagined reward decode while holding splits, 5 steps ahead:")
        for t in range(5):
            state = wm.imagine_step(ps, state, hold, rng)
            r = decode_scalar_logits(wm.reward(ps, state.feature()).data, wm.grid)
            print(f"  t+{t + 1}: mean {r.mean():9.1f}  min {r.min():9.1f}  max {r.max():9.1f}")


if __name__ == "__main__":
    main()
