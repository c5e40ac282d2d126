"""Datasets: binary persistence, CSV import, normalization, synthetic oracles.

MMD1 file layout (little-endian)::

    b"MMD1"  u32 version
    u32 n_sequences  u32 D_x  u32 D_y  f64 frame_shift_s
    D_x + D_y names, each u32 byte length + UTF-8 bytes
    per sequence: u32 T, context T x D_x f32 row-major, target T x D_y f32 row-major
"""

from __future__ import annotations

import csv
import json
import struct
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyDataset, FormatError, InvalidSpec, LengthMismatch, ParseError
from .numerics import RngState, gaussian_draws, integer_draws, uniform_draws

DATASET_MAGIC = b"MMD1"
DATASET_VERSION = 1


@dataclass
class Dataset:
    sequences: list[tuple[np.ndarray, np.ndarray]]
    context_names: list[str]
    target_names: list[str]
    frame_shift_s: float = 0.005

    def __post_init__(self):
        dx, dy = len(self.context_names), len(self.target_names)
        for i, (x, y) in enumerate(self.sequences):
            if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
                raise LengthMismatch(f"sequence {i}: context {x.shape} and target {y.shape} not paired")
            if x.shape[1] != dx or y.shape[1] != dy:
                raise LengthMismatch(f"sequence {i}: dims {x.shape[1]}/{y.shape[1]} do not match names {dx}/{dy}")
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise FormatError(f"sequence {i}: non-finite values")

    @property
    def context_dim(self) -> int:
        return len(self.context_names)

    @property
    def target_dim(self) -> int:
        return len(self.target_names)

    @property
    def n_frames(self) -> int:
        return sum(len(x) for x, _ in self.sequences)

    def contexts(self) -> np.ndarray:
        return np.vstack([x for x, _ in self.sequences]) if self.sequences else np.empty((0, self.context_dim))

    def targets(self) -> np.ndarray:
        return np.vstack([y for _, y in self.sequences]) if self.sequences else np.empty((0, self.target_dim))

    def replace(self, sequences=None, context_names=None, target_names=None) -> "Dataset":
        return Dataset(
            self.sequences if sequences is None else sequences,
            list(self.context_names if context_names is None else context_names),
            list(self.target_names if target_names is None else target_names),
            self.frame_shift_s,
        )

    def filter_frames(self, keep) -> "Dataset":
        """Drop frames where ``keep(context, target)`` (per-sequence boolean mask) is False."""
        seqs = []
        for x, y in self.sequences:
            mask = np.asarray(keep(x, y), dtype=bool)
            if mask.any():
                seqs.append((x[mask], y[mask]))
        return self.replace(sequences=seqs)


# ------------------------------------------------------------------ binary


def write_dataset(ds: Dataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", DATASET_VERSION))
        fh.write(struct.pack("<IIId", len(ds.sequences), ds.context_dim, ds.target_dim, ds.frame_shift_s))
        for name in list(ds.context_names) + list(ds.target_names):
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        for x, y in ds.sequences:
            fh.write(struct.pack("<I", x.shape[0]))
            fh.write(np.ascontiguousarray(x, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(y, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, section: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated file in {section}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.take(4, "magic") != DATASET_MAGIC:
        raise FormatError(f"{path}: bad magic, not an MMD1 dataset")
    (version,) = struct.unpack("<I", r.take(4, "version"))
    if version != DATASET_VERSION:
        raise FormatError(f"{path}: unsupported dataset version {version}")
    n_seq, dx, dy, shift = struct.unpack("<IIId", r.take(20, "header"))
    names = []
    for i in range(dx + dy):
        (n,) = struct.unpack("<I", r.take(4, f"name {i}"))
        try:
            names.append(r.take(n, f"name {i}").decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: name {i} is not valid UTF-8") from exc
    seqs = []
    for s in range(n_seq):
        (T,) = struct.unpack("<I", r.take(4, f"sequence {s} length"))
        x = np.frombuffer(r.take(4 * T * dx, f"sequence {s} context"), dtype="<f4").reshape(T, dx)
        y = np.frombuffer(r.take(4 * T * dy, f"sequence {s} target"), dtype="<f4").reshape(T, dy)
        seqs.append((x.astype(np.float32), y.astype(np.float32)))
    if r.pos != len(r.data):
        raise FormatError(f"{path}: {len(r.data) - r.pos} trailing bytes after last sequence")
    return Dataset(seqs, names[:dx], names[dx:], shift)


# --------------------------------------------------------------------- csv


def _read_numeric_csv(path, header: bool):
    rows, names = [], None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if header and names is None:
                names = [c.strip() for c in row]
                continue
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: row {lineno}, column {col}: non-numeric cell {cell!r}", lineno, col) from None
            if rows and len(vals) != len(rows[0]):
                raise ParseError(f"{path}: row {lineno} has {len(vals)} columns, expected {len(rows[0])}", lineno, None)
            rows.append(vals)
    arr = np.asarray(rows, dtype=np.float64).reshape(len(rows), -1) if rows else np.empty((0, 0))
    if names is None:
        names = [f"c{i}" for i in range(arr.shape[1])]
    return arr, names


def import_csv(context_path, target_path, seq_boundaries, header: bool = False, frame_shift_s: float = 0.005) -> Dataset:
    """Build a dataset from two row-aligned CSV files.

    ``seq_boundaries`` lists sequence lengths in frames; they must sum to the
    number of data rows.
    """
    X, xnames = _read_numeric_csv(context_path, header)
    Y, ynames = _read_numeric_csv(target_path, header)
    if not header:
        xnames = [f"x{i}" for i in range(X.shape[1])]
        ynames = [f"y{i}" for i in range(Y.shape[1])]
    if X.shape[0] != Y.shape[0]:
        raise LengthMismatch(f"context has {X.shape[0]} rows, target has {Y.shape[0]}")
    lengths = [int(b) for b in seq_boundaries]
    if any(n < 1 for n in lengths) or sum(lengths) != X.shape[0]:
        raise LengthMismatch(f"sequence lengths {lengths} do not partition {X.shape[0]} rows")
    seqs, start = [], 0
    for n in lengths:
        seqs.append((X[start : start + n].astype(np.float32), Y[start : start + n].astype(np.float32)))
        start += n
    return Dataset(seqs, xnames, ynames, frame_shift_s)


# ----------------------------------------------------------- normalization


@dataclass
class NormStats:
    context_mean: np.ndarray
    context_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray
    degenerate: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            np.asarray(d["context_mean"], dtype=np.float64),
            np.asarray(d["context_std"], dtype=np.float64),
            np.asarray(d["target_mean"], dtype=np.float64),
            np.asarray(d["target_std"], dtype=np.float64),
            list(d.get("degenerate", [])),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "NormStats":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _moments(frames: np.ndarray, names: list[str], degenerate: list[str]):
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    bad = ~(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
    for i in np.flatnonzero(bad):
        degenerate.append(names[i])
    if bad.any():
        warnings.warn(f"constant dimensions {[names[i] for i in np.flatnonzero(bad)]}: std clamped to 1", RuntimeWarning, stacklevel=3)
    std = np.where(bad, 1.0, std)
    return mean, std


def fit_norm_stats(ds: Dataset) -> NormStats:
    if ds.n_frames == 0:
        raise EmptyDataset("cannot fit normalization on an empty dataset")
    degenerate: list[str] = []
    cm, cs = _moments(ds.contexts().astype(np.float64), ds.context_names, degenerate)
    tm, ts = _moments(ds.targets().astype(np.float64), ds.target_names, degenerate)
    return NormStats(cm, cs, tm, ts, degenerate)


def apply_norm(ds: Dataset, stats: NormStats) -> Dataset:
    seqs = [
        ((np.asarray(x, np.float64) - stats.context_mean) / stats.context_std,
         (np.asarray(y, np.float64) - stats.target_mean) / stats.target_std)
        for x, y in ds.sequences
    ]
    return ds.replace(sequences=seqs)


def invert_norm(frames, stats: NormStats, stream: str = "target") -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if stream == "target":
        return frames * stats.target_std + stats.target_mean
    if stream == "context":
        return frames * stats.context_std + stats.context_mean
    raise ValueError(f"unknown stream {stream!r}")


# ---------------------------------------------------------------- oracles

ORACLE_FAMILIES = ("conditional-gaussian", "conditional-bimodal", "heteroscedastic")


@dataclass
class OracleSpec:
    """Synthetic conditional distribution with closed-form moments.

    Context is one continuous value ``x`` plus a one-hot code ``k`` fixed per
    sequence.  Per target dimension ``d``::

        mu_d(x, k) = slope_d * x + offset_d + sin_amp_d * sin(sin_freq * x) + code_shift[k][d]
        s_d(x)     = std_base_d + std_slope_d * |x|      (heteroscedastic)
                   = std_base_d                           (other families)

    ``conditional-gaussian`` and ``heteroscedastic`` draw ``y = mu + s * e``;
    ``conditional-bimodal`` draws ``y = mu + sign * mode_sep + s * e`` with
    ``sign = +1`` w.p. ``mode_weight`` (one sign per frame, shared by all dims).

    The context is a random walk reflected into ``[x_low, x_high]`` with
    Gaussian steps of std ``walk_step``, started uniformly in the range.
    """

    family: str = "heteroscedastic"
    target_dim: int = 2
    n_codes: int = 0
    slope: tuple[float, ...] = (1.0, 0.0)
    offset: tuple[float, ...] = (0.0, 0.0)
    sin_amp: tuple[float, ...] = (0.0, 1.0)
    sin_freq: float = 2.0
    std_base: tuple[float, ...] = (0.2, 0.2)
    std_slope: tuple[float, ...] = (0.8, 0.8)
    mode_sep: tuple[float, ...] = (1.0, 1.0)
    mode_weight: float = 0.5
    code_shift: tuple[tuple[float, ...], ...] = ()
    x_low: float = -1.0
    x_high: float = 1.0
    walk_step: float = 0.05

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.family not in ORACLE_FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}; expected one of {ORACLE_FAMILIES}")
        D = self.target_dim
        if D < 1:
            raise InvalidSpec("target_dim must be >= 1")
        for name in ("slope", "offset", "sin_amp", "std_base", "std_slope", "mode_sep"):
            val = tuple(float(v) for v in getattr(self, name))
            if len(val) != D:
                raise InvalidSpec(f"{name} needs {D} entries, got {len(val)}")
            setattr(self, name, val)
        if any(v < 0 for v in self.std_base) or any(v < 0 for v in self.std_slope):
            raise InvalidSpec("std parameters must be nonnegative")
        if not 0.0 <= self.mode_weight <= 1.0:
            raise InvalidSpec("mode_weight must lie in [0, 1]")
        if self.n_codes < 0:
            raise InvalidSpec("n_codes must be >= 0")
        shift = tuple(tuple(float(v) for v in row) for row in self.code_shift)
        if self.n_codes and not shift:
            shift = tuple(tuple(0.0 for _ in range(D)) for _ in range(self.n_codes))
        if len(shift) != self.n_codes or any(len(r) != D for r in shift):
            raise InvalidSpec(f"code_shift must be {self.n_codes} x {D}")
        self.code_shift = shift
        if not self.x_high > self.x_low:
            raise InvalidSpec("x_high must exceed x_low")
        if self.walk_step < 0:
            raise InvalidSpec("walk_step must be nonnegative")

    @property
    def context_dim(self) -> int:
        return 1 + self.n_codes

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OracleSpec":
        d = dict(d)
        for k in ("slope", "offset", "sin_amp", "std_base", "std_slope", "mode_sep"):
            if k in d:
                d[k] = tuple(d[k])
        if "code_shift" in d:
            d["code_shift"] = tuple(tuple(r) for r in d["code_shift"])
        return cls(**d)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "OracleSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def oracle_preset(family: str, n_codes: int = 0) -> OracleSpec:
    """Default spec per family (bimodal uses a wider gap and a thinner spread)."""
    if family == "conditional-gaussian":
        return OracleSpec(family, std_base=(0.5, 0.5), std_slope=(0.0, 0.0), n_codes=n_codes)
    if family == "conditional-bimodal":
        return OracleSpec(family, std_base=(0.25, 0.25), std_slope=(0.0, 0.0), mode_sep=(1.0, 1.0), n_codes=n_codes)
    if family == "heteroscedastic":
        return OracleSpec(family, n_codes=n_codes)
    raise InvalidSpec(f"unknown family {family!r}")


@dataclass
class OracleMoments:
    mean: np.ndarray
    var: np.ndarray
    components: list[tuple[float, np.ndarray, np.ndarray]]  # (weight, mean, var)


def _mu_s(spec: OracleSpec, x: np.ndarray, code: np.ndarray | None):
    x = np.asarray(x, dtype=np.float64)[..., None]
    mu = (np.asarray(spec.slope) * x + np.asarray(spec.offset)
          + np.asarray(spec.sin_amp) * np.sin(spec.sin_freq * x))
    if spec.n_codes and code is not None:
        mu = mu + np.asarray(spec.code_shift)[np.asarray(code)]
    s = np.asarray(spec.std_base) + (np.asarray(spec.std_slope) * np.abs(x) if spec.family == "heteroscedastic" else 0.0)
    return mu, np.broadcast_to(s, mu.shape)


def oracle_conditional_moments(spec: OracleSpec, x: float, code: int = 0) -> OracleMoments:
    spec.validate()
    if spec.n_codes and not 0 <= code < spec.n_codes:
        raise InvalidSpec(f"code {code} outside 0..{spec.n_codes - 1}")
    mu, s = _mu_s(spec, np.asarray(float(x)), np.asarray(code) if spec.n_codes else None)
    var = s * s
    if spec.family != "conditional-bimodal":
        return OracleMoments(mu, var, [(1.0, mu, var)])
    a = np.asarray(spec.mode_sep)
    w = spec.mode_weight
    comps = [(w, mu + a, var.copy()), (1.0 - w, mu - a, var.copy())]
    mean = mu + (2.0 * w - 1.0) * a
    total_var = var + 4.0 * w * (1.0 - w) * a * a
    return OracleMoments(mean, total_var, comps)


def oracle_sample(spec: OracleSpec, x, code, rng: RngState) -> np.ndarray:
    """Draw one target frame per entry of ``x`` (vectorized)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    mu, s = _mu_s(spec, x, np.asarray(code).reshape(-1) if spec.n_codes else None)
    n, D = mu.shape
    e = gaussian_draws(rng, n * D).reshape(n, D)
    y = mu + s * e
    if spec.family == "conditional-bimodal":
        sign = np.where(uniform_draws(rng, n) < spec.mode_weight, 1.0, -1.0)
        y = y + sign[:, None] * np.asarray(spec.mode_sep)
    return y


def _reflect(v: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    u = np.mod(v - lo, 2.0 * span)
    return lo + np.where(u > span, 2.0 * span - u, u)


def synth_context(spec: OracleSpec, T: int, rng: RngState):
    """Reflected random walk in ``[x_low, x_high]`` and a single condition code."""
    start = spec.x_low + (spec.x_high - spec.x_low) * uniform_draws(rng, 1)[0]
    steps = gaussian_draws(rng, T - 1) * spec.walk_step
    x = _reflect(start + np.concatenate([[0.0], np.cumsum(steps)]), spec.x_low, spec.x_high)
    code = int(integer_draws(rng, 1, spec.n_codes)[0]) if spec.n_codes else 0
    return x, code


def encode_context(spec: OracleSpec, x, code: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    out = np.zeros((len(x), spec.context_dim))
    out[:, 0] = x
    if spec.n_codes:
        out[:, 1 + code] = 1.0
    return out


def synth_oracle_dataset(spec: OracleSpec, n_seqs: int, T: int, rng: RngState) -> Dataset:
    """Seed-deterministic synthetic dataset; sequence ``i`` uses ``rng.split(i)``."""
    spec.validate()
    if n_seqs < 0 or T < 1:
        raise InvalidSpec("need n_seqs >= 0 and T >= 1")
    seqs = []
    for i in range(n_seqs):
        r = rng.split(i)
        x, code = synth_context(spec, T, r)
        y = oracle_sample(spec, x, np.full(T, code), r)
        seqs.append((encode_context(spec, x, code).astype(np.float32), y.astype(np.float32)))
    cnames = ["x"] + [f"code{k}" for k in range(spec.n_codes)]
    ynames = [f"y{d}" for d in range(spec.target_dim)]
    return Dataset(seqs, cnames, ynames, 0.005)
