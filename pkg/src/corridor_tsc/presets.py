"""Model size presets and the training-run configuration record."""

import json
from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class SizePreset:
    name: str
    deter: int  # recurrent state width
    hidden: int  # MLP hidden width (and embedding width)
    groups: int  # categorical latent groups
    classes: int  # classes per group
    depth: int  # hidden layers per MLP

    def __post_init__(self):
        if min(self.deter, self.hidden, self.groups, self.classes) <= 0 or self.depth < 0:
            raise ValueError("preset dimensions must be positive")


# scaled-down ladder preserving the XS < S < M < L ordering at desk scale;
# XXS exists for tests and CPU-budget acceptance runs
SIZE_PRESETS = {
    "XXS": SizePreset("XXS", deter=64, hidden=64, groups=8, classes=8, depth=1),
    "XS": SizePreset("XS", deter=128, hidden=128, groups=16, classes=16, depth=2),
    "S": SizePreset("S", deter=256, hidden=256, groups=32, classes=32, depth=2),
    "M": SizePreset("M", deter=512, hidden=512, groups=32, classes=32, depth=3),
    "L": SizePreset("L", deter=1024, hidden=1024, groups=32, classes=32, depth=4),
}


@dataclass
class TrainConfig:
    scenario: str = "1"  # '1' / '2' or a scenario JSON path
    n_intersections: int = 5
    size: str = "S"
    ratio: int = 128  # replayed steps per environment step
    batch_size: int = 16
    batch_length: int = 64
    seed: int = 0
    budget: int = 2880  # total environment steps, prefill included
    eval_every: int = 20  # checkpoint cadence, in episodes
    replay_capacity: int = 500_000
    prefill_episodes: int = 1
    # world-model optimizer
    wm_lr: float = 1e-4
    wm_clip: float = 1000.0
    # behavior
    horizon: int = 15
    gamma: float = 0.997
    lam: float = 0.95
    entropy: float = 3e-4
    ac_lr: float = 3e-5
    ac_clip: float = 100.0
    slow_ema: float = 0.02
    percentile_decay: float = 0.99

    def __post_init__(self):
        if self.size not in SIZE_PRESETS:
            raise ValueError(f"unknown size preset: {self.size}")
        if self.ratio <= 0:
            raise ValueError("training ratio must be positive")
        if self.batch_size <= 0 or self.batch_length <= 0:
            raise ValueError("batch dimensions must be positive")
        if self.budget <= 0:
            raise ValueError("env-step budget must be positive")

    @property
    def preset(self):
        return SIZE_PRESETS[self.size]

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))
