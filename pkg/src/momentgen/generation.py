"""Noise sampling, delta windows, MLPG and trajectory smoothing.

Stacked feature layout: each frame holds ``[static(D), window1(D), ...]``,
i.e. column ``w * D + d`` is window ``w`` applied to static dimension ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.signal import firwin

from .errors import DimensionMismatch, InvalidCutoff
from .network import NetworkParams, forward
from .numerics import RngState, SymmetricBandedMatrix, gaussian_draws, spd_solve_banded

STATIC = (1.0,)
DELTA = (-0.5, 0.0, 0.5)
ACCEL = (1.0, -2.0, 1.0)


@dataclass(frozen=True)
class WindowSet:
    """Centered odd-length coefficient arrays; window 0 must be static."""

    windows: tuple[tuple[float, ...], ...] = (STATIC, DELTA, ACCEL)

    def __post_init__(self):
        ws = tuple(tuple(float(c) for c in w) for w in self.windows)
        if not ws or ws[0] != STATIC:
            raise ValueError("first window must be the static window (1,)")
        if any(len(w) % 2 == 0 for w in ws):
            raise ValueError("window lengths must be odd (centered)")
        object.__setattr__(self, "windows", ws)

    @property
    def count(self) -> int:
        return len(self.windows)

    @property
    def half_width(self) -> int:
        return max(len(w) // 2 for w in self.windows)

    @classmethod
    def named(cls, names) -> "WindowSet":
        table = {"static": STATIC, "delta": DELTA, "accel": ACCEL}
        return cls(tuple(table[n] for n in names))


@dataclass(frozen=True)
class NoiseSpec:
    dim: int = 3
    zero: bool = False  # "w/o rand" system: noise fixed to 0


@dataclass
class MlpgProblem:
    stacked_means: np.ndarray
    windows: WindowSet = field(default_factory=WindowSet)
    variances: np.ndarray | None = None  # per stacked dimension; default 1

    def __post_init__(self):
        self.stacked_means = np.asarray(self.stacked_means, dtype=np.float64)
        if self.stacked_means.ndim != 2 or self.stacked_means.shape[1] % self.windows.count:
            raise DimensionMismatch(
                f"stacked means {self.stacked_means.shape} not divisible into {self.windows.count} windows"
            )
        n = self.stacked_means.shape[1]
        if self.variances is None:
            self.variances = np.ones(n)
        self.variances = np.broadcast_to(np.asarray(self.variances, dtype=np.float64), (n,)).copy()
        if np.any(self.variances <= 0):
            raise ValueError("MLPG variances must be positive")

    @property
    def static_dim(self) -> int:
        return self.stacked_means.shape[1] // self.windows.count


def sample_noise(spec: NoiseSpec, T: int, rng: RngState | None) -> np.ndarray:
    """``T x dim`` standard-normal noise, drawn row-major; zeros in zero mode."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if spec.zero:
        return np.zeros((T, spec.dim))
    return gaussian_draws(rng, T * spec.dim).reshape(T, spec.dim)


def build_window_matrix(T: int, windows: WindowSet) -> sp.csr_matrix:
    """Sparse ``(T * count) x T`` map; row ``t * count + w`` is window ``w`` at frame ``t``.

    Frames beyond the edges are replaced by the nearest edge frame.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rows, cols, vals = [], [], []
    nw = windows.count
    for w, coefs in enumerate(windows.windows):
        half = len(coefs) // 2
        for k, c in enumerate(coefs):
            if c == 0.0:
                continue
            src = np.clip(np.arange(T) + k - half, 0, T - 1)
            rows.append(np.arange(T) * nw + w)
            cols.append(src)
            vals.append(np.full(T, c))
    M = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(T * nw, T)
    )
    # duplicates from edge clipping are summed
    return M.tocsr()


def apply_windows(static, windows: WindowSet) -> np.ndarray:
    """Stack static + dynamic features: ``T x D`` -> ``T x (D * count)``."""
    static = np.asarray(static, dtype=np.float64)
    T, D = static.shape
    W = build_window_matrix(T, windows)
    out = (W @ static).reshape(T, windows.count, D)
    return out.reshape(T, windows.count * D)


def _normal_matrix(W: sp.csr_matrix, precision: np.ndarray, bandwidth: int) -> SymmetricBandedMatrix:
    """``W^T P W`` in lower band storage."""
    A = (W.T @ sp.diags(precision) @ W).tocsr()
    n = A.shape[0]
    ab = np.zeros((bandwidth + 1, n))
    for i in range(bandwidth + 1):
        ab[i, : n - i] = A.diagonal(-i)
    return SymmetricBandedMatrix(ab)


def mlpg(problem: MlpgProblem) -> np.ndarray:
    """Static trajectory maximizing the Gaussian likelihood of the stacked means.

    Per static dimension solves ``(W^T P W) c = W^T P m`` with a banded
    Cholesky factorization, ``P`` the diagonal precision.
    """
    m = problem.stacked_means
    T = m.shape[0]
    D = problem.static_dim
    nw = problem.windows.count
    W = build_window_matrix(T, problem.windows)
    bw = min(2 * problem.windows.half_width, T - 1)
    out = np.empty((T, D))
    for d in range(D):
        cols = [w * D + d for w in range(nw)]
        prec = np.tile(1.0 / problem.variances[cols], T)
        mean_d = m[:, cols].reshape(-1)
        A = _normal_matrix(W, prec, bw)
        b = W.T @ (prec * mean_d)
        out[:, d] = spd_solve_banded(A, b)
    return out


def mlpg_backward(dC, windows: WindowSet, variances=None) -> np.ndarray:
    """Map ``dL/dc`` (T x D) back to ``dL/dm`` (T x D*count) through MLPG.

    MLPG is linear, ``c = A^-1 W^T P m`` with symmetric ``A``, so
    ``dL/dm = P W A^-1 dL/dc``.
    """
    dC = np.asarray(dC, dtype=np.float64)
    T, D = dC.shape
    nw = windows.count
    variances = np.ones(D * nw) if variances is None else np.asarray(variances, dtype=np.float64)
    W = build_window_matrix(T, windows)
    bw = min(2 * windows.half_width, T - 1)
    out = np.empty((T, D * nw))
    for d in range(D):
        cols = [w * D + d for w in range(nw)]
        prec = np.tile(1.0 / variances[cols], T)
        A = _normal_matrix(W, prec, bw)
        z = spd_solve_banded(A, dC[:, d])
        out[:, cols] = (prec * (W @ z)).reshape(T, nw)
    return out


def design_smoothing_filter(cutoff_hz: float, frame_shift_s: float, taps: int = 31) -> np.ndarray:
    """Hamming-windowed sinc low-pass, taps normalized to unit DC gain."""
    nyquist = 0.5 / frame_shift_s
    if not 0.0 < cutoff_hz < nyquist:
        raise InvalidCutoff(f"cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz for {frame_shift_s * 1e3:g} ms frames")
    if taps < 1 or taps % 2 == 0:
        raise InvalidCutoff("tap count must be a positive odd number")
    h = firwin(taps, cutoff_hz, window="hamming", fs=1.0 / frame_shift_s)
    h = 0.5 * (h + h[::-1])  # exact symmetry, so the filter is exactly zero phase
    return h / h.sum()


def smooth_trajectory(traj, cutoff_hz: float = 50.0, frame_shift_s: float = 0.005, taps: int = 31) -> np.ndarray:
    """Zero-phase FIR low-pass per dimension with edge-replication padding."""
    traj = np.asarray(traj, dtype=np.float64)
    squeeze = traj.ndim == 1
    x = traj[:, None] if squeeze else traj
    h = design_smoothing_filter(cutoff_hz, frame_shift_s, taps)
    half = taps // 2
    padded = np.pad(x, ((half, half), (0, 0)), mode="edge")
    T = x.shape[0]
    out = np.zeros_like(x)
    # symmetric taps: correlation equals convolution
    for k in range(taps):
        out += h[k] * padded[k : k + T]
    return out[:, 0] if squeeze else out


def generate(
    generator_params: NetworkParams,
    context_features,
    noise,
    windows: WindowSet | None = None,
    variances=None,
) -> np.ndarray:
    """``[context; noise]`` -> generator -> stacked features -> MLPG static trajectory."""
    context_features = np.asarray(context_features, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[0] != context_features.shape[0]:
        raise DimensionMismatch(f"noise has {noise.shape[0]} rows, context has {context_features.shape[0]}")
    windows = windows or WindowSet()
    stacked, _ = forward(generator_params, np.hstack([context_features, noise]))
    return mlpg(MlpgProblem(stacked, windows, variances))
