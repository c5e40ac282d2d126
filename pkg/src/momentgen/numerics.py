"""Deterministic RNG, SPD solvers and a finite-difference gradient oracle.

RNG algorithm
-------------
The integer stream is Philox4x64-10 (numpy's ``Philox`` bit generator), keyed
by the 128-bit value ``(seed, stream)``.  The root generator of a seed uses
``stream = 0``; ``RngState.split(i)`` returns the generator keyed by
``(seed, splitmix64(stream + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64))``, so
nested splits give distinct streams.  The integer stream is bit-exact on
every platform.

Floats are derived from 64-bit words ``w`` as ``(w >> 11) * 2**-53``.
Gaussian draws use Box-Muller on consecutive word pairs ``(w1, w2)``::

    u1 = ((w1 >> 11) + 1) * 2**-53          # in (0, 1]
    u2 = (w2 >> 11) * 2**-53                # in [0, 1)
    r  = sqrt(-2 log u1)
    z0, z1 = r cos(2 pi u2), r sin(2 pi u2)

``gaussian_draws(rng, n)`` consumes ``2 * ceil(n / 2)`` words and emits the
pairs in order ``z0, z1, z0, z1, ...``; an unused trailing ``z1`` is dropped.
Gaussian values are reproducible up to the platform's libm rounding of
``log``/``cos``/``sin``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


_TWO_M53 = 2.0 ** -53


class RngState:
    """Seeded counter-based generator; one instance per worker."""

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed)
        if seed < 0 or seed > _MASK64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.stream = int(stream) & _MASK64
        self._bitgen = np.random.Philox(key=np.array([seed, self.stream], dtype=np.uint64))

    def words(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words."""
        if n == 0:
            return np.empty(0, dtype=np.uint64)
        return np.asarray(self._bitgen.random_raw(n), dtype=np.uint64)

    def split(self, index: int) -> "RngState":
        """Independent child stream for worker ``index`` (stateless in the parent)."""
        return RngState(self.seed, splitmix64((self.stream + (int(index) + 1) * _GOLDEN) & _MASK64))

    @property
    def state(self) -> dict:
        return self._bitgen.state

    def __repr__(self):
        return f"RngState(seed={self.seed}, stream={self.stream})"


def rng_new(seed: int) -> RngState:
    return RngState(seed)


def uniform_draws(rng: RngState, n: int) -> np.ndarray:
    """``n`` floats in [0, 1); consumes ``n`` words."""
    w = rng.words(n)
    return (w >> np.uint64(11)).astype(np.float64) * _TWO_M53


def gaussian_draws(rng: RngState, n: int) -> np.ndarray:
    """``n`` standard-normal draws by Box-Muller (see module docstring)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return np.empty(0, dtype=np.float64)
    pairs = (n + 1) // 2
    w = rng.words(2 * pairs).reshape(pairs, 2)
    u1 = ((w[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_M53
    u2 = (w[:, 1] >> np.uint64(11)).astype(np.float64) * _TWO_M53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty((pairs, 2))
    z[:, 0] = r * np.cos(theta)
    z[:, 1] = r * np.sin(theta)
    return z.reshape(-1)[:n]


def integer_draws(rng: RngState, n: int, high: int) -> np.ndarray:
    """``n`` integers in [0, high) via ``floor(u * high)``."""
    return np.minimum((uniform_draws(rng, n) * high).astype(np.int64), high - 1)


def permutation(rng: RngState, n: int) -> np.ndarray:
    """Seeded permutation: stable argsort of ``n`` uniform words."""
    return np.argsort(rng.words(n), kind="stable")


# ---------------------------------------------------------------- solvers


def cholesky_dense(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises NotPositiveDefinite on a nonpositive pivot."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def cholesky_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    Y = solve_triangular(L, B, lower=True, check_finite=False)
    return solve_triangular(L.T, Y, lower=False, check_finite=False)


def spd_solve_dense(A, B) -> np.ndarray:
    """Solve ``A X = B`` for symmetric positive-definite ``A`` by Cholesky."""
    B = np.asarray(B, dtype=np.float64)
    L = cholesky_dense(A)
    if B.shape[0] != L.shape[0]:
        raise DimensionMismatch(f"A is {L.shape}, B has {B.shape[0]} rows")
    return cholesky_solve(L, B)


class SymmetricBandedMatrix:
    """Symmetric matrix stored as its lower band.

    ``values[i, j]`` holds ``A[j + i, j]`` (LAPACK lower band storage), so row 0
    is the diagonal and row ``bandwidth`` the outermost subdiagonal.
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionMismatch("band storage must be 2-D")
        self.values = values

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def bandwidth(self) -> int:
        return self.values.shape[0] - 1

    @classmethod
    def from_dense(cls, A: np.ndarray, bandwidth: int) -> "SymmetricBandedMatrix":
        A = np.asarray(A, dtype=np.float64)
        n = A.shape[0]
        bandwidth = min(bandwidth, n - 1)
        ab = np.zeros((bandwidth + 1, n))
        for i in range(bandwidth + 1):
            ab[i, : n - i] = np.diagonal(A, -i)
        return cls(ab)

    def to_dense(self) -> np.ndarray:
        n = self.dimension
        A = np.zeros((n, n))
        for i in range(self.bandwidth + 1):
            d = self.values[i, : n - i]
            A += np.diag(d, -i)
            if i:
                A += np.diag(d, i)
        return A

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n = self.dimension
        x = np.asarray(x, dtype=np.float64)
        y = self.values[0] * x
        for i in range(1, self.bandwidth + 1):
            d = self.values[i, : n - i]
            y[i:] += d * x[: n - i]
            y[: n - i] += d * x[i:]
        return y


def spd_solve_banded(A: SymmetricBandedMatrix, b) -> np.ndarray:
    """Solve ``A x = b`` with a banded Cholesky factorization."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != A.dimension:
        raise DimensionMismatch(f"matrix dimension {A.dimension}, rhs length {b.shape[0]}")
    try:
        cb = cholesky_banded(A.values, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return cho_solve_banded((cb, True), b, check_finite=False)


def finite_diff_gradient(f, X, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at array ``X``."""
    if h <= 0:
        raise ValueError("h must be positive")
    X = np.array(X, dtype=np.float64)
    grad = np.zeros_like(X)
    flat = X.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(X)
        flat[i] = orig - h
        fm = f(X)
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return grad
