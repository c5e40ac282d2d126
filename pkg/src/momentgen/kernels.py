"""Gaussian kernels, gram matrices, bandwidth selection and CMMD weights."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, InsufficientData, NotPositiveDefinite
from .numerics import RngState, cholesky_dense, integer_draws, rng_new

MAX_SCANNED_PAIRS = 10**6
SUBSAMPLE_SAFETY = 1.5


@dataclass
class KernelConfig:
    """Gaussian kernel ``exp(-|a - b|^2 / sigma2)`` plus gram regularization."""

    sigma2: float = 1.0
    lam: float = 0.01
    jitter: float = 1e-8

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be nonnegative, got {self.jitter}")


def _sigma2(cfg) -> float:
    return cfg.sigma2 if isinstance(cfg, KernelConfig) else float(cfg)


def gaussian_kernel(a, b, sigma2) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"frame shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.exp(-np.dot(d, d) / _sigma2(sigma2)))


def sq_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared distances by explicit differences.

    Differencing (not the |a|^2 + |b|^2 - 2ab expansion) keeps the result
    exactly symmetric and exactly zero on identical frames.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"feature dims differ: {A.shape[1]} vs {B.shape[1]}")
    out = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        d = A[:, k, None] - B[None, :, k]
        out += d * d
    return out


def gram(A, B, cfg) -> np.ndarray:
    """``K[t, u] = k(A[t], B[u])``."""
    return np.exp(-sq_distances(A, B) / _sigma2(cfg))


def bandwidth_from_data(frames, rng: RngState | None = None, max_pairs: int = MAX_SCANNED_PAIRS) -> float:
    """sigma^2 as the largest squared pairwise distance among training frames.

    ``frames`` is one frame matrix or a collection of them.  All pairs are
    scanned when there are at most ``max_pairs``; otherwise ``max_pairs``
    uniformly drawn pairs are scanned and the maximum is inflated by 1.5.
    Degenerate data (all frames identical) falls back to 1.0 with a warning.
    """
    if isinstance(frames, np.ndarray):
        X = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    else:
        parts = [np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in frames]
        if not parts:
            raise InsufficientData("no frames given")
        X = np.vstack(parts)
    n = X.shape[0]
    if n < 2:
        raise InsufficientData(f"need at least 2 frames, got {n}")
    n_pairs = n * (n - 1) // 2
    if n_pairs <= max_pairs:
        best = 0.0
        block = max(1, max_pairs // n)
        for start in range(0, n, block):
            d = sq_distances(X[start : start + block], X)
            best = max(best, float(d.max()))
    else:
        rng = rng if rng is not None else rng_new(0)
        i = integer_draws(rng, max_pairs, n)
        j = integer_draws(rng, max_pairs, n)
        diff = X[i] - X[j]
        best = float(np.einsum("ij,ij->i", diff, diff).max()) * SUBSAMPLE_SAFETY
    if best <= 0.0:
        warnings.warn("all frames identical; falling back to sigma2 = 1", RuntimeWarning, stacklevel=2)
        return 1.0
    return best


def select_bandwidth(frames, rule: str = "max_pairwise", rng: RngState | None = None) -> float:
    """Bandwidth by rule name.

    ``max_pairwise`` scales the kernel so the exponent stays within [-1, 0] on
    training pairs.  ``unit`` keeps sigma^2 = 1 and expects the caller to have
    scaled features so raw squared distances are already below one.
    """
    if rule == "max_pairwise":
        return bandwidth_from_data(frames, rng)
    if rule == "unit":
        return 1.0
    raise ValueError(f"unknown bandwidth rule {rule!r}")


def cmmd_weights(Kx, cfg: KernelConfig) -> np.ndarray:
    """``G = (Kx + lam I)^-1 Kx (Kx + lam I)^-1`` via one Cholesky factorization.

    With ``L L^T = Kx + lam I``, ``G = L^-T (L^-1 Kx L^-T) L^-1``; the result is
    symmetrized.  A failed factorization is retried once with ``jitter * I``
    added before NotPositiveDefinite is raised.
    """
    Kx = np.asarray(Kx, dtype=np.float64)
    if Kx.ndim != 2 or Kx.shape[0] != Kx.shape[1]:
        raise DimensionMismatch(f"Kx must be square, got {Kx.shape}")
    T = Kx.shape[0]
    reg = Kx + cfg.lam * np.eye(T)
    try:
        L = cholesky_dense(reg)
    except NotPositiveDefinite:
        try:
            L = cholesky_dense(reg + cfg.jitter * np.eye(T))
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(
                f"input gram (T={T}, lambda={cfg.lam}) is not positive definite after jitter {cfg.jitter}"
            ) from exc
    # M = L^-1 Kx L^-T
    M = solve_triangular(L, Kx, lower=True, check_finite=False)
    M = solve_triangular(L, M.T, lower=True, check_finite=False).T
    # G = L^-T M L^-1
    G = solve_triangular(L.T, M, lower=False, check_finite=False)
    G = solve_triangular(L.T, G.T, lower=False, check_finite=False).T
    return 0.5 * (G + G.T)
