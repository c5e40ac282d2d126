"""Baseline MSE training, bottleneck extraction and CMMD generator training."""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .dataio import Dataset, NormStats, apply_norm, fit_norm_stats
from .errors import EmptyDataset, NonFiniteLoss
from .generation import WindowSet, apply_windows, mlpg, MlpgProblem, mlpg_backward, sample_noise, NoiseSpec, smooth_trajectory
from .kernels import KernelConfig, cmmd_weights, gram, select_bandwidth
from .losses import cmmd, cmmd_grad, mse, mse_grad
from .network import (
    AdamState,
    NetworkLayout,
    NetworkParams,
    adam_init,
    adam_step,
    backward,
    forward,
    hidden_activations,
    init_network,
    load_checkpoint,
    save_checkpoint,
)
from .numerics import RngState, permutation

# child streams of the run's root generator
STREAM_BASELINE_INIT = 10
STREAM_BASELINE_ORDER = 11
STREAM_GENERATOR_INIT = 20
STREAM_GENERATOR_ORDER = 21
STREAM_GENERATOR_NOISE = 22
STREAM_BANDWIDTH = 23


@dataclass
class TrainLog:
    """Per-step records, written as JSON lines.

    Keys: ``stage, step, epoch, seq, chunk, frames, loss, term_yy, term_hh,
    term_yh, grad_norm, noise_checksum, wall_time``.  The three ``term_*`` keys
    are the raw weighted gram sums; MSE steps leave them null.
    """

    records: list[dict] = field(default_factory=list)

    def append(self, **rec):
        self.records.append(rec)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @staticmethod
    def read(path) -> "TrainLog":
        with open(path) as fh:
            return TrainLog([json.loads(line) for line in fh if line.strip()])

    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.records])


@dataclass
class TrainResult:
    params: NetworkParams
    optstate: AdamState
    log: TrainLog
    kernels: dict = field(default_factory=dict)  # {"output": KernelConfig, "input": KernelConfig}


def chunk_bounds(T: int, chunk_length: int) -> list[tuple[int, int]]:
    """Contiguous near-equal pieces of at most ``chunk_length`` frames."""
    n = -(-T // chunk_length)
    edges = np.linspace(0, T, n + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def prepare_dataset(ds: Dataset, cfg: TrainConfig, stats: NormStats | None = None) -> tuple[Dataset, NormStats]:
    """Normalize contexts/targets and stack static + dynamic target features."""
    if not ds.sequences:
        raise EmptyDataset("dataset has no sequences")
    if cfg.smooth_targets:
        ds = ds.replace(
            sequences=[(x, smooth_trajectory(y, cfg.smooth_cutoff_hz, ds.frame_shift_s)) for x, y in ds.sequences]
        )
    stats = stats or fit_norm_stats(ds)
    norm = apply_norm(ds, stats)
    windows = WindowSet.named(cfg.windows)
    names = [f"{w}:{n}" for w in cfg.windows for n in ds.target_names]
    seqs = [(x, apply_windows(y, windows)) for x, y in norm.sequences]
    return norm.replace(sequences=seqs, target_names=names), stats


def _grad_norm(g: NetworkParams) -> float:
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in g.arrays())))


def _epoch_chunks(ds: Dataset, cfg: TrainConfig, order_rng: RngState):
    for s in permutation(order_rng, len(ds.sequences)):
        x, y = ds.sequences[s]
        for c, (a, b) in enumerate(chunk_bounds(len(x), cfg.chunk_length)):
            yield int(s), c, np.asarray(x[a:b], np.float64), np.asarray(y[a:b], np.float64)


def train_baseline(ds: Dataset, cfg: TrainConfig, rng: RngState, log_every: int = 1) -> TrainResult:
    """MSE network from (normalized) contexts to stacked targets."""
    if not ds.sequences:
        raise EmptyDataset("dataset has no sequences")
    layout = NetworkLayout(ds.context_dim, cfg.baseline_layout_hidden, ds.target_dim)
    params = init_network(layout, rng.split(STREAM_BASELINE_INIT))
    opt = adam_init(params, lr=cfg.learning_rate)
    order_rng = rng.split(STREAM_BASELINE_ORDER)
    log = TrainLog()
    t0 = time.perf_counter()
    step = 0
    for epoch in range(cfg.baseline_epochs):
        for s, c, x, y in _epoch_chunks(ds, cfg, order_rng):
            yh, cache = forward(params, x)
            loss = mse(y, yh)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"baseline loss became {loss} at step {step} (sequence {s}, chunk {c})")
            grads, _ = backward(params, cache, mse_grad(y, yh))
            adam_step(params, grads, opt)
            if step % log_every == 0:
                log.append(stage="baseline", step=step, epoch=epoch, seq=s, chunk=c, frames=len(x), loss=loss,
                           term_yy=None, term_hh=None, term_yh=None, grad_norm=_grad_norm(grads),
                           noise_checksum=None, wall_time=time.perf_counter() - t0)
            step += 1
    return TrainResult(params, opt, log)


def extract_bottleneck_dataset(baseline: NetworkParams, ds: Dataset, layer_index: int) -> Dataset:
    """Replace each context stream by the baseline's hidden-layer activations."""
    seqs = [(hidden_activations(baseline, x, layer_index), y) for x, y in ds.sequences]
    width = baseline.layout.hidden_dims[layer_index - 1]
    if seqs and all(not np.any(x) for x, _ in seqs):
        warnings.warn("bottleneck activations are all zero (dead or zero-weight baseline)", RuntimeWarning, stacklevel=2)
    return ds.replace(sequences=seqs, context_names=[f"bn{i}" for i in range(width)])


def _kernel_inputs(x: np.ndarray, n: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    return np.hstack([x, n]) if cfg.input_kernel == "context+noise" else x


def fit_kernels(bds: Dataset, cfg: TrainConfig, rng: RngState) -> dict:
    """Output- and input-side kernel configs from the training data.

    The input side is scanned on ``[context; noise]`` with one seeded noise
    draw per frame, matching what the gram sees during training.
    """
    bw_rng = rng.split(STREAM_BANDWIDTH)
    Y = bds.targets().astype(np.float64)
    if cfg.loss_placement == "mlpg":
        D = Y.shape[1] // len(cfg.windows)
        Y = Y[:, :D]
    s2y = select_bandwidth(Y, cfg.bandwidth_rule, bw_rng)
    X = bds.contexts().astype(np.float64)
    N = sample_noise(NoiseSpec(cfg.noise_dim), len(X), bw_rng)
    s2x = select_bandwidth(_kernel_inputs(X, N, cfg), cfg.bandwidth_rule, bw_rng)
    return {
        "output": KernelConfig(s2y, cfg.lam, cfg.jitter),
        "input": KernelConfig(s2x, cfg.lam, cfg.jitter),
    }


def generator_step(params, x, y, n, kernels, cfg: TrainConfig, windows: WindowSet, variances=None):
    """Loss and parameter gradients of one CMMD step (``G`` held constant)."""
    xt = np.hstack([x, n])
    Kx = gram(_kernel_inputs(x, n, cfg), _kernel_inputs(x, n, cfg), kernels["input"])
    G = cmmd_weights(Kx, kernels["input"])
    yh, cache = forward(params, xt)
    if cfg.loss_placement == "mlpg":
        D = y.shape[1] // windows.count
        c = mlpg(MlpgProblem(yh, windows, variances))
        lv = cmmd(G, y[:, :D], c, kernels["output"])
        dY = mlpg_backward(cmmd_grad(G, y[:, :D], c, kernels["output"]), windows, variances)
    else:
        lv = cmmd(G, y, yh, kernels["output"])
        dY = cmmd_grad(G, y, yh, kernels["output"])
    grads, _ = backward(params, cache, dY)
    return lv, grads


def train_generator(
    bds: Dataset,
    cfg: TrainConfig,
    rng: RngState,
    init: NetworkParams | None = None,
    log_every: int = 1,
    checkpoint_dir=None,
) -> TrainResult:
    """CMMD generator on ``[bottleneck; noise]`` inputs.

    Each visit of a chunk draws fresh noise, rebuilds the input gram and its
    CMMD weights, and takes one Adam step.
    """
    if not bds.sequences:
        raise EmptyDataset("dataset has no sequences")
    windows = WindowSet.named(cfg.windows)
    layout = NetworkLayout(bds.context_dim + cfg.noise_dim, cfg.generator_hidden, bds.target_dim)
    params = init.copy() if init is not None else init_network(layout, rng.split(STREAM_GENERATOR_INIT))
    opt = adam_init(params, lr=cfg.learning_rate)
    kernels = fit_kernels(bds, cfg, rng)
    variances = None
    if cfg.mlpg_variances == "global":
        variances = bds.targets().astype(np.float64).var(axis=0)
    order_rng = rng.split(STREAM_GENERATOR_ORDER)
    noise_rng = rng.split(STREAM_GENERATOR_NOISE)
    noise_spec = NoiseSpec(cfg.noise_dim)
    log = TrainLog()
    t0 = time.perf_counter()
    step = 0
    for epoch in range(cfg.generator_epochs):
        for s, c, x, y in _epoch_chunks(bds, cfg, order_rng):
            n = sample_noise(noise_spec, len(x), noise_rng)
            lv, grads = generator_step(params, x, y, n, kernels, cfg, windows, variances)
            if not np.isfinite(lv.value):
                raise NonFiniteLoss(
                    f"CMMD loss became {lv.value} at step {step} (sequence {s}, chunk {c}); "
                    f"terms yy={lv.term_yy} hh={lv.term_hh} yh={lv.term_yh}"
                )
            adam_step(params, grads, opt)
            if step % log_every == 0:
                log.append(stage="generator", step=step, epoch=epoch, seq=s, chunk=c, frames=len(x),
                           loss=lv.value, term_yy=lv.term_yy, term_hh=lv.term_hh, term_yh=lv.term_yh,
                           grad_norm=_grad_norm(grads), noise_checksum=float(n.sum()),
                           wall_time=time.perf_counter() - t0)
            step += 1
            if checkpoint_dir is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                save_checkpoint(params, opt, Path(checkpoint_dir) / f"generator_step{step:07d}.mmnc")
    return TrainResult(params, opt, log, kernels)


__all__ = [
    "TrainLog",
    "TrainResult",
    "chunk_bounds",
    "prepare_dataset",
    "train_baseline",
    "extract_bottleneck_dataset",
    "fit_kernels",
    "generator_step",
    "train_generator",
    "save_checkpoint",
    "load_checkpoint",
]
