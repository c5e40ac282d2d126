"""Trained pipeline bundle: baseline + generator + normalization + windows.

Checkpoints carry a JSON sidecar ``<checkpoint>.meta.json`` with the
normalization statistics, window names, bottleneck layer, noise dimension,
kernel bandwidths and (for generators) the relative path of the baseline
checkpoint, so a generator checkpoint alone is enough to synthesize.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import NormStats, invert_norm
from .errors import FormatError
from .generation import MlpgProblem, NoiseSpec, WindowSet, mlpg, sample_noise
from .network import NetworkParams, forward, hidden_activations, load_checkpoint
from .numerics import RngState

SYSTEMS = ("conv", "pro_with_rand", "pro_without_rand")


def meta_path(ckpt) -> Path:
    return Path(str(ckpt) + ".meta.json")


def write_meta(ckpt, meta: dict) -> None:
    with open(meta_path(ckpt), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def read_meta(ckpt) -> dict:
    p = meta_path(ckpt)
    try:
        with open(p) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"{ckpt}: missing metadata sidecar {p.name}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: invalid JSON ({exc})") from exc


def file_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


@dataclass
class SynthesisModel:
    baseline: NetworkParams
    stats: NormStats
    windows: WindowSet
    bottleneck_layer: int
    generator: NetworkParams | None = None
    noise_dim: int = 3
    variances: np.ndarray | None = None

    @classmethod
    def load(cls, ckpt) -> "SynthesisModel":
        """Load from a generator or baseline checkpoint plus its sidecar."""
        meta = read_meta(ckpt)
        params, _ = load_checkpoint(ckpt)
        if meta.get("kind") == "generator":
            base_path = Path(os.path.dirname(os.path.abspath(ckpt))) / meta["baseline"]
            baseline, _ = load_checkpoint(base_path)
            generator = params
        else:
            baseline, generator = params, None
        variances = meta.get("mlpg_variances")
        return cls(
            baseline=baseline,
            stats=NormStats.from_dict(meta["norm"]),
            windows=WindowSet.named(meta["windows"]),
            bottleneck_layer=int(meta["bottleneck_layer"]),
            generator=generator,
            noise_dim=int(meta.get("noise_dim", 3)),
            variances=None if variances is None else np.asarray(variances, dtype=np.float64),
        )

    @property
    def static_dim(self) -> int:
        return self.baseline.layout.output_dim // self.windows.count

    def normalize_context(self, contexts) -> np.ndarray:
        return (np.asarray(contexts, dtype=np.float64) - self.stats.context_mean) / self.stats.context_std

    def bottleneck(self, contexts) -> np.ndarray:
        return hidden_activations(self.baseline, self.normalize_context(contexts), self.bottleneck_layer)

    def stacked(self, contexts, system: str, rng: RngState | None = None) -> np.ndarray:
        """Normalized stacked output frames for raw ``contexts``."""
        if system not in SYSTEMS:
            raise ValueError(f"unknown system {system!r}; expected one of {SYSTEMS}")
        if system == "conv":
            out, _ = forward(self.baseline, self.normalize_context(contexts))
            return out
        if self.generator is None:
            raise ValueError(f"system {system!r} needs a generator checkpoint")
        bn = self.bottleneck(contexts)
        noise = sample_noise(NoiseSpec(self.noise_dim, zero=system == "pro_without_rand"), len(bn), rng)
        out, _ = forward(self.generator, np.hstack([bn, noise]))
        return out

    def frame_draws(self, context_row, n: int, rng: RngState | None, system: str = "pro_with_rand") -> np.ndarray:
        """``n`` independent static frames (raw units) for one context vector."""
        ctx = np.repeat(np.atleast_2d(np.asarray(context_row, dtype=np.float64)), n, axis=0)
        stacked = self.stacked(ctx, system, rng)
        static = stacked[:, : self.static_dim]
        return invert_norm(static, self.stats)

    def trajectory(self, contexts, rng: RngState | None, system: str = "pro_with_rand", denormalize: bool = True) -> np.ndarray:
        """Static trajectory via MLPG over the stacked outputs of a sequence."""
        stacked = self.stacked(contexts, system, rng)
        traj = mlpg(MlpgProblem(stacked, self.windows, self.variances))
        return invert_norm(traj, self.stats) if denormalize else traj
