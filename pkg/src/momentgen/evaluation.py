"""Objective evaluation: two-sample MMD, oracle moment errors, variation.

Structured report format (JSON lines, one record per line):

* ``{"record": "header", "config_hash", "seed", "checkpoints": {...}, ...}``
* ``{"record": "metric", "name", "system", "value", "tolerance", "passed", "seed", "checkpoint"}``
* ``{"record": "table_row", "table", "system", "x", "sample_mean", "oracle_mean",
  "sample_std", "oracle_std", "mean_error", "std_ratio", "seed", "checkpoint"}``

The header is always the first line; an empty report is the header alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataio import OracleSpec, encode_context, oracle_conditional_moments, oracle_sample
from .errors import DimensionMismatch, EmptySequence
from .kernels import bandwidth_from_data
from .losses import mmd_sq
from .numerics import RngState, permutation


def _spread(a: np.ndarray, axis: int = 0) -> np.ndarray:
    """Population std, exactly 0 where all entries along ``axis`` are equal.

    ``np.std`` of identical values can be a few ulp off zero because the mean
    is rounded; deterministic systems must report exactly zero spread.
    """
    const = np.all(a == np.take(a, [0], axis=axis), axis=axis)
    return np.where(const, 0.0, a.std(axis=axis))


def two_sample_mmd(A, B, sigma2: float | None = None, rng: RngState | None = None) -> float:
    """Biased MMD^2; bandwidth from the pooled frames unless given."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise EmptySequence("two_sample_mmd needs nonempty sets")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"feature dims differ: {A.shape[1]} vs {B.shape[1]}")
    if sigma2 is None:
        pooled = np.vstack([A, B])
        sigma2 = bandwidth_from_data(pooled, rng) if len(pooled) >= 2 else 1.0
    return mmd_sq(A, B, sigma2).value


def permutation_null(A, B, n_perm: int, rng: RngState, sigma2: float) -> np.ndarray:
    """MMD^2 over random re-splits of the pooled set (sizes preserved)."""
    pooled = np.vstack([np.atleast_2d(A), np.atleast_2d(B)])
    na = len(np.atleast_2d(A))
    out = np.empty(n_perm)
    for i in range(n_perm):
        p = permutation(rng, len(pooled))
        out[i] = two_sample_mmd(pooled[p[:na]], pooled[p[na:]], sigma2)
    return out


def context_grid(spec: OracleSpec, n: int = 9, inset: float = 0.05) -> np.ndarray:
    """``n`` evenly spaced context values inside the training range."""
    span = spec.x_high - spec.x_low
    return np.linspace(spec.x_low + inset * span, spec.x_high - inset * span, n)


@dataclass
class ContextMoments:
    x: float
    sample_mean: np.ndarray
    sample_std: np.ndarray
    oracle_mean: np.ndarray
    oracle_std: np.ndarray
    mean_error: float
    std_ratio: np.ndarray

    def to_dict(self) -> dict:
        return {
            "x": float(self.x),
            "sample_mean": self.sample_mean.tolist(),
            "sample_std": self.sample_std.tolist(),
            "oracle_mean": self.oracle_mean.tolist(),
            "oracle_std": self.oracle_std.tolist(),
            "mean_error": float(self.mean_error),
            "std_ratio": self.std_ratio.tolist(),
        }


def oracle_sampler(spec: OracleSpec, code: int = 0):
    """Sampler drawing straight from the oracle (harness self-test)."""

    def draw(x: float, n: int, rng: RngState) -> np.ndarray:
        return oracle_sample(spec, np.full(n, x), np.full(n, code), rng)

    return draw


def model_sampler(model, spec: OracleSpec, system: str, code: int = 0):
    """Sampler over a ``SynthesisModel``; frames drawn independently per context."""

    def draw(x: float, n: int, rng: RngState) -> np.ndarray:
        ctx = encode_context(spec, [x], code)[0]
        return model.frame_draws(ctx, n, rng, system)

    return draw


def conditional_moment_error(sampler, spec: OracleSpec, contexts, n_draws: int, rng: RngState,
                             scale=None, code: int = 0) -> list[ContextMoments]:
    """Per-context sample mean/std of ``n_draws`` outputs against the oracle.

    ``mean_error`` is the Euclidean norm of ``(sample_mean - mu(x)) / scale``
    (``scale`` defaults to ones; pass the target std for normalized units).
    ``std_ratio`` is per dimension; when the oracle std is 0 it is reported
    as 0 for zero sample spread and inf otherwise.
    """
    if n_draws < 100:
        raise ValueError("n_draws must be >= 100")
    out = []
    for i, x in enumerate(np.asarray(contexts, dtype=np.float64).reshape(-1)):
        draws = np.asarray(sampler(float(x), n_draws, rng.split(i)), dtype=np.float64)
        m = oracle_conditional_moments(spec, x, code)
        sc = np.ones(draws.shape[1]) if scale is None else np.asarray(scale, dtype=np.float64)
        mean = np.where(np.all(draws == draws[0], axis=0), draws[0], draws.mean(axis=0))
        std = _spread(draws)
        ostd = np.sqrt(m.var)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(ostd > 0, std / np.where(ostd > 0, ostd, 1.0), np.where(std > 0, np.inf, 0.0))
        out.append(ContextMoments(float(x), mean, std, m.mean, ostd, float(np.linalg.norm((mean - m.mean) / sc)), ratio))
    return out


def variation_score(generator, context_sequence, n_realizations: int, rng: RngState) -> float:
    """Mean over frames/dims of the across-realization std of trajectories.

    ``generator(context_sequence, rng)`` returns one trajectory; realization
    ``i`` uses ``rng.split(i)``.
    """
    if n_realizations < 2:
        raise ValueError("n_realizations must be >= 2")
    trajs = np.stack([np.asarray(generator(context_sequence, rng.split(i)), dtype=np.float64)
                      for i in range(n_realizations)])
    return float(_spread(trajs).mean())


# ------------------------------------------------------------------ reports


@dataclass
class EvalReport:
    header: dict = field(default_factory=dict)
    metrics: list[dict] = field(default_factory=list)
    tables: list[dict] = field(default_factory=list)

    def add_metric(self, name, value, system=None, tolerance=None, passed=None, **extra):
        rec = {"record": "metric", "name": name, "system": system, "value": _jsonable(value),
               "tolerance": _jsonable(tolerance), "passed": passed,
               "seed": self.header.get("seed"), "checkpoint": self.header.get("checkpoint")}
        rec.update({k: _jsonable(v) for k, v in extra.items()})
        self.metrics.append(rec)
        return rec

    def add_table_rows(self, table: str, system: str, rows: list[ContextMoments]):
        for r in rows:
            rec = {"record": "table_row", "table": table, "system": system,
                   "seed": self.header.get("seed"), "checkpoint": self.header.get("checkpoint")}
            rec.update(r.to_dict())
            self.tables.append(_jsonable(rec))

    def records(self) -> list[dict]:
        return [{"record": "header", **self.header}] + self.metrics + self.tables


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, float) and not np.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def emit_report(report: EvalReport, path, format: str = "structured") -> None:
    if format == "structured":
        with open(path, "w") as fh:
            for rec in report.records():
                fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")
    elif format == "text":
        with open(path, "w") as fh:
            fh.write("# evaluation report\n")
            for k in sorted(report.header):
                fh.write(f"# {k}: {_fmt(_jsonable(report.header[k]))}\n")
            for m in report.metrics:
                status = "" if m["passed"] is None else ("PASS" if m["passed"] else "FAIL")
                tol = "" if m["tolerance"] is None else f" (tol {_fmt(m['tolerance'])})"
                fh.write(f"{m['name']:<32} {str(m['system'] or '-'):<18} {_fmt(m['value'])}{tol} {status}\n".rstrip() + "\n")
            for t in report.tables:
                fh.write(f"{t['table']} {t['system']} x={t['x']:+.3f} mean_err={t['mean_error']:.4f} "
                         f"std_ratio={_fmt(t['std_ratio'])}\n")
    else:
        raise ValueError(f"unknown report format {format!r}")


def read_report(path) -> EvalReport:
    with open(path) as fh:
        recs = [json.loads(line) for line in fh if line.strip()]
    if not recs or recs[0].get("record") != "header":
        raise ValueError(f"{path}: structured report must start with a header record")
    header = {k: v for k, v in recs[0].items() if k != "record"}
    rep = EvalReport(header)
    for r in recs[1:]:
        (rep.metrics if r["record"] == "metric" else rep.tables).append(r)
    return rep
