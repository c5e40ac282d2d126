"""Feed-forward ReLU network with a linear output layer.

Weights are stored ``out x in`` so a layer computes ``Z = X W^T + b`` on a
``T x in`` frame matrix.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .errors import DimensionMismatch, FormatError, InvalidLayout, LayerOutOfRange, ShapeMismatch
from .numerics import RngState, uniform_draws

CHECKPOINT_MAGIC = b"MMNC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkLayout:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise InvalidLayout(f"all layer sizes must be >= 1, got {dims}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def n_layers(self) -> int:
        return len(self.hidden_dims) + 1


@dataclass
class NetworkParams:
    layout: NetworkLayout
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        dims = self.layout.dims
        if len(self.weights) != self.layout.n_layers or len(self.biases) != self.layout.n_layers:
            raise ShapeMismatch("number of weight/bias arrays does not match layout")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise ShapeMismatch(f"layer {i}: W {W.shape}, b {b.shape} inconsistent with layout {dims}")

    def arrays(self) -> list[np.ndarray]:
        """Parameters in serialization order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.layout, [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(self.layout, [np.zeros_like(W) for W in self.weights], [np.zeros_like(b) for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input of each layer (post-activation of previous)
    preacts: list[np.ndarray]  # pre-activation of each layer


@dataclass
class AdamState:
    m: NetworkParams
    v: NetworkParams
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_network(layout: NetworkLayout, rng: RngState, scheme: str = "he_uniform") -> NetworkParams:
    """Uniform init with zero biases.

    ``he_uniform``: ReLU layers draw from U(-a, a) with ``a = sqrt(6 / fan_in)``
    (variance 2 / fan_in); the linear output layer uses ``a = sqrt(3 / fan_in)``.
    ``zeros`` gives an all-zero network.  Weights are filled layer by layer in
    row-major order from the uniform stream.
    """
    if not isinstance(layout, NetworkLayout):
        raise InvalidLayout("layout must be a NetworkLayout")
    dims = layout.dims
    weights, biases = [], []
    for i in range(layout.n_layers):
        fan_in, fan_out = dims[i], dims[i + 1]
        if scheme == "zeros":
            W = np.zeros((fan_out, fan_in))
        elif scheme == "he_uniform":
            last = i == layout.n_layers - 1
            a = np.sqrt((3.0 if last else 6.0) / fan_in)
            W = (2.0 * uniform_draws(rng, fan_out * fan_in) - 1.0).reshape(fan_out, fan_in) * a
        else:
            raise InvalidLayout(f"unknown init scheme {scheme!r}")
        weights.append(W)
        biases.append(np.zeros(fan_out))
    return NetworkParams(layout, weights, biases)


def forward(params: NetworkParams, X) -> tuple[np.ndarray, ForwardCache]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.layout.input_dim:
        raise DimensionMismatch(f"input must be T x {params.layout.input_dim}, got {X.shape}")
    inputs, preacts = [], []
    a = X
    last = params.layout.n_layers - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        z = a @ W.T + b
        preacts.append(z)
        a = z if i == last else np.maximum(z, 0.0)
    return a, ForwardCache(inputs, preacts)


def backward(params: NetworkParams, cache: ForwardCache, dY) -> tuple[NetworkParams, np.ndarray]:
    """Parameter and input gradients of a loss with ``dL/dY = dY``."""
    dY = np.asarray(dY, dtype=np.float64)
    if dY.shape != cache.preacts[-1].shape:
        raise ShapeMismatch(f"dY shape {dY.shape} != output shape {cache.preacts[-1].shape}")
    n = params.layout.n_layers
    gW: list = [None] * n
    gb: list = [None] * n
    d = dY
    for i in reversed(range(n)):
        gW[i] = d.T @ cache.inputs[i]
        gb[i] = d.sum(axis=0)
        d = d @ params.weights[i]
        if i > 0:
            # ReLU subgradient at 0 is 0
            d = d * (cache.preacts[i - 1] > 0.0)
    return NetworkParams(params.layout, gW, gb), d


def adam_init(params: NetworkParams, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(params.zeros_like(), params.zeros_like(), 0, lr, beta1, beta2, eps)


def adam_step(params: NetworkParams, grads: NetworkParams, state: AdamState) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    if grads.layout != params.layout or state.m.layout != params.layout:
        raise ShapeMismatch("gradient/optimizer layout does not match parameters")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def hidden_activations(params: NetworkParams, X, layer_index: int) -> np.ndarray:
    """Post-ReLU activations of hidden layer ``layer_index`` (1-based)."""
    n_hidden = len(params.layout.hidden_dims)
    if not 1 <= layer_index <= n_hidden:
        raise LayerOutOfRange(f"layer {layer_index} outside 1..{n_hidden}")
    a = np.asarray(X, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != params.layout.input_dim:
        raise DimensionMismatch(f"input must be T x {params.layout.input_dim}, got {a.shape}")
    for i in range(layer_index):
        a = np.maximum(a @ params.weights[i].T + params.biases[i], 0.0)
    return a


# ------------------------------------------------------------- checkpoints
#
# Layout (little-endian):
#   b"MMNC"  u32 version
#   u32 input_dim  u32 n_hidden  u32 hidden_dims[n_hidden]  u32 output_dim
#   f64 parameters per layer: W (row-major), then b
#   u8 has_adam; if 1: u64 step, f64 lr, beta1, beta2, eps, then m and v
#   arrays in parameter order


def _write_arrays(fh: BinaryIO, arrays):
    for a in arrays:
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return data


def _read_params(fh: BinaryIO, layout: NetworkLayout, what: str) -> NetworkParams:
    dims = layout.dims
    weights, biases = [], []
    for i in range(layout.n_layers):
        n_w = dims[i + 1] * dims[i]
        W = np.frombuffer(_read_exact(fh, 8 * n_w, f"{what} layer {i} weights"), dtype="<f8")
        b = np.frombuffer(_read_exact(fh, 8 * dims[i + 1], f"{what} layer {i} bias"), dtype="<f8")
        weights.append(W.astype(np.float64).reshape(dims[i + 1], dims[i]))
        biases.append(b.astype(np.float64))
    return NetworkParams(layout, weights, biases)


def save_checkpoint(params: NetworkParams, optstate: AdamState | None, path) -> None:
    lay = params.layout
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<II", lay.input_dim, len(lay.hidden_dims)))
        fh.write(struct.pack(f"<{len(lay.hidden_dims)}I", *lay.hidden_dims))
        fh.write(struct.pack("<I", lay.output_dim))
        _write_arrays(fh, params.arrays())
        if optstate is None:
            fh.write(b"\x00")
        else:
            fh.write(b"\x01")
            fh.write(struct.pack("<Q", optstate.step))
            fh.write(struct.pack("<4d", optstate.lr, optstate.beta1, optstate.beta2, optstate.eps))
            _write_arrays(fh, optstate.m.arrays())
            _write_arrays(fh, optstate.v.arrays())


def load_checkpoint(path) -> tuple[NetworkParams, AdamState | None]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not an MMNC checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        input_dim, n_hidden = struct.unpack("<II", _read_exact(fh, 8, "layout"))
        hidden = struct.unpack(f"<{n_hidden}I", _read_exact(fh, 4 * n_hidden, "layout"))
        (output_dim,) = struct.unpack("<I", _read_exact(fh, 4, "layout"))
        try:
            layout = NetworkLayout(input_dim, hidden, output_dim)
        except InvalidLayout as exc:
            raise FormatError(f"{path}: {exc}") from exc
        params = _read_params(fh, layout, "parameters")
        if not params.is_finite():
            raise FormatError(f"{path}: non-finite parameters")
        flag = _read_exact(fh, 1, "optimizer flag")
        optstate = None
        if flag == b"\x01":
            (step,) = struct.unpack("<Q", _read_exact(fh, 8, "optimizer step"))
            lr, b1, b2, eps = struct.unpack("<4d", _read_exact(fh, 32, "optimizer hyperparameters"))
            m = _read_params(fh, layout, "optimizer m")
            v = _read_params(fh, layout, "optimizer v")
            optstate = AdamState(m, v, step, lr, b1, b2, eps)
        elif flag != b"\x00":
            raise FormatError(f"{path}: bad optimizer flag {flag!r}")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after checkpoint")
    return params, optstate
