"""Training configuration and JSON config files.

A config file is a JSON object whose keys are ``TrainConfig`` field names;
list-valued fields take JSON arrays.  Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

LOSS_PLACEMENTS = ("stacked", "mlpg")
INPUT_KERNELS = ("context+noise", "context")
MLPG_VARIANCES = ("unit", "global")


@dataclass
class TrainConfig:
    seed: int = 0
    baseline_epochs: int = 40
    generator_epochs: int = 60
    chunk_length: int = 200
    learning_rate: float = 1e-3
    lam: float = 0.01
    jitter: float = 1e-8
    baseline_hidden: tuple[int, ...] = (64, 64, 16)
    bottleneck_layer: int | None = None  # 1-based; None = last hidden layer
    bottleneck_dim: int | None = None  # overrides the bottleneck layer width
    generator_hidden: tuple[int, ...] = (64, 64, 64)
    noise_dim: int = 3
    windows: tuple[str, ...] = ("static", "delta", "accel")
    loss_placement: str = "stacked"  # "mlpg" is experimental
    bandwidth_rule: str = "max_pairwise"
    input_kernel: str = "context+noise"  # "context" is experimental
    mlpg_variances: str = "unit"
    smooth_targets: bool = False
    smooth_cutoff_hz: float = 50.0
    checkpoint_every: int = 0  # steps; 0 disables intermediate checkpoints

    def __post_init__(self):
        self.baseline_hidden = tuple(int(h) for h in self.baseline_hidden)
        self.generator_hidden = tuple(int(h) for h in self.generator_hidden)
        self.windows = tuple(self.windows)
        self.validate()

    def validate(self):
        if self.chunk_length < 2:
            raise ValueError("chunk_length must be >= 2")
        if self.noise_dim < 1:
            raise ValueError("noise_dim must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.jitter < 0:
            raise ValueError("jitter must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.baseline_epochs < 0 or self.generator_epochs < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if not self.baseline_hidden:
            raise ValueError("baseline needs at least one hidden layer for bottleneck extraction")
        n_hidden = len(self.baseline_hidden)
        if self.bottleneck_layer is not None and not 1 <= self.bottleneck_layer <= n_hidden:
            raise ValueError(f"bottleneck_layer must be in 1..{n_hidden}")
        if self.bottleneck_dim is not None and self.bottleneck_dim < 1:
            raise ValueError("bottleneck_dim must be >= 1")
        if not self.windows or self.windows[0] != "static":
            raise ValueError("windows must start with 'static'")
        for name, allowed in (
            ("loss_placement", LOSS_PLACEMENTS),
            ("input_kernel", INPUT_KERNELS),
            ("mlpg_variances", MLPG_VARIANCES),
            ("bandwidth_rule", ("max_pairwise", "unit")),
        ):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")
        if self.smooth_cutoff_hz <= 0:
            raise ValueError("smooth_cutoff_hz must be positive")

    @property
    def bottleneck_index(self) -> int:
        return self.bottleneck_layer or len(self.baseline_hidden)

    @property
    def baseline_layout_hidden(self) -> tuple[int, ...]:
        hidden = list(self.baseline_hidden)
        if self.bottleneck_dim is not None:
            hidden[self.bottleneck_index - 1] = self.bottleneck_dim
        return tuple(hidden)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **overrides) -> "TrainConfig":
        d = self.to_dict()
        d.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig.from_dict(d)


def load_config(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def config_hash(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
