"""Corridor traffic-signal control with a learned world model.

A self-contained stack: numpy autodiff substrate, mesoscopic corridor
simulator, queue-penalty control environment, recurrent latent world
model with imagination-trained actor-critic, replay/ratio trainer, and a
CLI for runs, sweeps, baselines, and reports.
"""

__version__ = "0.1.0"

from .behavior import ActorCritic, BehaviorConfig, ImaginedTrajectory, ReturnNormalizer, lambda_returns
from .env import CorridorEnv, EnvConfig, Observation, apply_action, corridor_reward, encode_observation, link_reward
from .nn import GRUCell, Linear, MLP, ParamSet, categorical_sample_st, one_hot, unimix_logits
from .optim import adam_step, global_norm
from .presets import SIZE_PRESETS, SizePreset, TrainConfig
from .replay import ReplayBuffer
from .scenarios import ScenarioConfig
from .sim import CorridorSim, SignalController, build_corridor, green_movements
from .tensor import Tensor, grad, no_grad
from .trainer import (
    TrainRun,
    evaluate_policy,
    run_fixed_split_episode,
    train_loop,
    train_ops_due,
)
from .transforms import BinGrid, symexp, symlog, twohot_decode, twohot_encode
from .world_model import LatentState, WorldModel, WorldModelBatch, WorldModelConfig

__all__ = [
    "ActorCritic",
    "BehaviorConfig",
    "BinGrid",
    "CorridorEnv",
    "CorridorSim",
    "EnvConfig",
    "GRUCell",
    "ImaginedTrajectory",
    "LatentState",
    "Linear",
    "MLP",
    "Observation",
    "ParamSet",
    "ReplayBuffer",
    "ReturnNormalizer",
    "SIZE_PRESETS",
    "ScenarioConfig",
    "SignalController",
    "SizePreset",
    "Tensor",
    "TrainConfig",
    "TrainRun",
    "WorldModel",
    "WorldModelBatch",
    "WorldModelConfig",
    "adam_step",
    "apply_action",
    "build_corridor",
    "categorical_sample_st",
    "corridor_reward",
    "encode_observation",
    "evaluate_policy",
    "global_norm",
    "grad",
    "green_movements",
    "lambda_returns",
    "link_reward",
    "no_grad",
    "one_hot",
    "run_fixed_split_episode",
    "symexp",
    "symlog",
    "train_loop",
    "train_ops_due",
    "twohot_decode",
    "twohot_encode",
    "unimix_logits",
]
