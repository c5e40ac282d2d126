"""Squared MMD, conditional MMD, and MSE with analytic gradients.

For weights ``W`` (all ones for plain MMD, ``G^T`` for CMMD) every trace term
is realized as ``tr(G K) = sum_{t,u} G[u, t] K[t, u] = sum(W * K)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptySequence
from .kernels import _sigma2, gram


@dataclass
class LossValue:
    value: float
    term_yy: float
    term_hh: float
    term_yh: float


def _frames(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be a T x D matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise EmptySequence(f"{name} has no frames")
    return a


def _check_pair(y, yhat):
    y = _frames(y, "y")
    yhat = _frames(yhat, "yhat")
    if y.shape[1] != yhat.shape[1]:
        raise DimensionMismatch(f"feature dims differ: {y.shape[1]} vs {yhat.shape[1]}")
    return y, yhat


def _combine(yy, hh, yh, ny, nh):
    if ny == nh:
        return (yy + hh - 2.0 * yh) / (ny * nh)
    return yy / (ny * ny) + hh / (nh * nh) - 2.0 * yh / (ny * nh)


def _sym_sum(M):
    # summing M and M^T in both orders makes the cross term exactly symmetric in (y, yhat)
    return 0.5 * (float(np.sum(M)) + float(np.sum(np.ascontiguousarray(M.T))))


def _weighted_terms(W, y, yhat, s2):
    # W is None for the all-ones weighting
    Kyy = gram(y, y, s2)
    Khh = gram(yhat, yhat, s2)
    Kyh = gram(y, yhat, s2)
    if W is None:
        return float(np.sum(Kyy)), float(np.sum(Khh)), _sym_sum(Kyh)
    return float(np.sum(W * Kyy)), float(np.sum(W * Khh)), _sym_sum(W * Kyh)


def _weighted_grad(W, y, yhat, s2):
    """Gradients of sum(W * K(yhat, yhat)) and sum(W * K(y, yhat)) w.r.t. yhat."""
    Khh = gram(yhat, yhat, s2)
    Kyh = gram(y, yhat, s2)
    if W is None:
        A = 2.0 * Khh
        C = Kyh
    else:
        A = (W + W.T) * Khh
        C = W * Kyh
    g_hh = (-2.0 / s2) * (A.sum(axis=1)[:, None] * yhat - A @ yhat)
    g_yh = (-2.0 / s2) * (C.sum(axis=0)[:, None] * yhat - C.T @ y)
    return g_hh, g_yh


def mmd_sq(y, yhat, kcfg) -> LossValue:
    """Biased squared MMD between two frame sets.

    Per-term normalizers ``T_y^2``, ``T_h^2`` and ``T_y T_h``; with equal
    lengths this is ``(yy + hh - 2 yh) / T^2``.
    """
    y, yhat = _check_pair(y, yhat)
    s2 = _sigma2(kcfg)
    yy, hh, yh = _weighted_terms(None, y, yhat, s2)
    return LossValue(_combine(yy, hh, yh, len(y), len(yhat)), yy, hh, yh)


def mmd_sq_grad(y, yhat, kcfg) -> np.ndarray:
    y, yhat = _check_pair(y, yhat)
    s2 = _sigma2(kcfg)
    g_hh, g_yh = _weighted_grad(None, y, yhat, s2)
    ny, nh = len(y), len(yhat)
    if ny == nh:
        return (g_hh - 2.0 * g_yh) / (ny * nh)
    return g_hh / (nh * nh) - 2.0 * g_yh / (ny * nh)


def _check_cmmd(G, y, yhat):
    y, yhat = _check_pair(y, yhat)
    G = np.asarray(G, dtype=np.float64)
    T = len(y)
    if len(yhat) != T or G.shape != (T, T):
        raise DimensionMismatch(f"G {G.shape} must be T x T with T = len(y) = len(yhat) = {T}, got len(yhat) = {len(yhat)}")
    return G, y, yhat


def cmmd(G, y, yhat, kcfg) -> LossValue:
    """Conditional MMD with the same weighting ``G`` on all three gram terms."""
    G, y, yhat = _check_cmmd(G, y, yhat)
    T = len(y)
    yy, hh, yh = _weighted_terms(G.T, y, yhat, _sigma2(kcfg))
    return LossValue(_combine(yy, hh, yh, T, T), yy, hh, yh)


def cmmd_grad(G, y, yhat, kcfg) -> np.ndarray:
    """d cmmd / d yhat with ``G`` held constant."""
    G, y, yhat = _check_cmmd(G, y, yhat)
    T = len(y)
    g_hh, g_yh = _weighted_grad(G.T, y, yhat, _sigma2(kcfg))
    return (g_hh - 2.0 * g_yh) / (T * T)


def mse(y, yhat) -> float:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise DimensionMismatch(f"shapes differ: {y.shape} vs {yhat.shape}")
    return float(np.mean((yhat - y) ** 2))


def mse_grad(y, yhat) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise DimensionMismatch(f"shapes differ: {y.shape} vs {yhat.shape}")
    return 2.0 * (yhat - y) / y.size
