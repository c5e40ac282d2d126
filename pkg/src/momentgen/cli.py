"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .config import TrainConfig, config_hash, load_config
from .dataio import (
    ORACLE_FAMILIES,
    Dataset,
    NormStats,
    OracleSpec,
    oracle_preset,
    read_dataset,
    synth_oracle_dataset,
    write_dataset,
)
from .errors import FormatError, MomentGenError, NumericalError
from .evaluation import (
    EvalReport,
    conditional_moment_error,
    context_grid,
    emit_report,
    model_sampler,
    read_report,
    two_sample_mmd,
    variation_score,
)
from .model import SYSTEMS, SynthesisModel, file_hash, read_meta, write_meta
from .network import load_checkpoint, save_checkpoint
from .numerics import rng_new
from .training import extract_bottleneck_dataset, prepare_dataset, train_baseline, train_generator

log = logging.getLogger("momentgen")

MAX_VARIATION_SEQS = 8  # variation scores use the first few held-out sequences


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _nonneg_float(s):
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


def _pos_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {s}")
    return v


def _pos_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {s}")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


def _int_list(s):
    try:
        vals = tuple(int(p) for p in s.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"layer sizes must be >= 1, got {s!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=_nonneg_int, default=None, help="RNG seed (default: config seed, 0)")
    g.add_argument("--config", default=None, help="JSON config file with TrainConfig keys; flags win")
    g.add_argument("--threads", type=_pos_int, default=1, help="BLAS worker threads (1 = bit-exact runs)")
    g.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="logging level")
    g.add_argument("--out-dir", default=".", help="all outputs must lie inside this directory (default: cwd)")

    p = _Parser(prog="momentgen", description="Sampling-based sequence generation with moment-matching networks.")
    p.add_argument("--version", action="version", version=f"momentgen {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("gen-data", parents=[common], help="synthesize an oracle dataset")
    s.add_argument("--family", choices=ORACLE_FAMILIES, default="heteroscedastic", help="oracle family")
    s.add_argument("--seqs", type=_nonneg_int, default=64, help="number of sequences")
    s.add_argument("--frames", type=_pos_int, default=400, help="frames per sequence")
    s.add_argument("--codes", type=_nonneg_int, default=0, help="number of one-hot condition codes")
    s.add_argument("--spec", default=None, help="JSON oracle spec overriding the family preset")
    s.add_argument("--out", required=True, help="output dataset (.mmd); the oracle spec goes to <out>.oracle.json")

    s = sub.add_parser("train-baseline", parents=[common], help="train the MSE baseline ('conv')")
    s.add_argument("--data", required=True, help="raw dataset (.mmd)")
    s.add_argument("--out", required=True, help="output checkpoint (.mmnc)")
    s.add_argument("--epochs", type=_nonneg_int, default=None, help="training epochs")
    s.add_argument("--lr", type=_pos_float, default=None, help="Adam learning rate")
    s.add_argument("--chunk-length", type=int, default=None, help="max frames per training chunk (>= 2)")
    s.add_argument("--hidden", type=_int_list, default=None, help="hidden layer sizes, e.g. 64,64,16")
    s.add_argument("--bottleneck-layer", type=_pos_int, default=None, help="1-based bottleneck layer (default: last)")
    s.add_argument("--bottleneck-dim", type=_pos_int, default=None, help="width of the bottleneck layer")
    s.add_argument("--log", default=None, help="training log (JSON lines)")

    s = sub.add_parser("extract-bottleneck", parents=[common], help="replace contexts by baseline bottleneck features")
    s.add_argument("--ckpt", required=True, help="baseline checkpoint")
    s.add_argument("--data", required=True, help="raw dataset (.mmd)")
    s.add_argument("--out", required=True, help="output bottleneck dataset (.mmd)")
    s.add_argument("--layer", type=_pos_int, default=None, help="1-based hidden layer (default: from checkpoint)")

    s = sub.add_parser("train-generator", parents=[common], help="train the CMMD generator")
    s.add_argument("--data", required=True, help="bottleneck dataset from extract-bottleneck")
    s.add_argument("--out", required=True, help="output checkpoint (.mmnc)")
    s.add_argument("--lambda", dest="lam", type=_nonneg_float, default=None, help="gram regularization (default 0.01)")
    s.add_argument("--epochs", type=_nonneg_int, default=None, help="training epochs")
    s.add_argument("--lr", type=_pos_float, default=None, help="Adam learning rate")
    s.add_argument("--chunk-length", type=int, default=None, help="max frames per chunk (>= 2)")
    s.add_argument("--noise-dim", type=_pos_int, default=None, help="prior noise dimension")
    s.add_argument("--hidden", type=_int_list, default=None, help="generator hidden sizes")
    s.add_argument("--loss-placement", choices=["stacked", "mlpg"], default=None, help="loss on stacked features or after MLPG (experimental)")
    s.add_argument("--input-kernel", choices=["context+noise", "context"], default=None, help="features of the input-side gram ('context' is experimental)")
    s.add_argument("--bandwidth-rule", choices=["max_pairwise", "unit"], default=None, help="kernel bandwidth rule")
    s.add_argument("--log", default=None, help="training log (JSON lines)")

    s = sub.add_parser("sample", parents=[common], help="sample trajectories")
    s.add_argument("--ckpt", required=True, help="generator (or baseline, with --system conv) checkpoint")
    s.add_argument("--data", required=True, help="raw dataset whose contexts drive sampling")
    s.add_argument("--realizations", type=_pos_int, default=5, help="trajectories per sequence")
    s.add_argument("--deterministic", action="store_true", help="fix the prior noise to 0 (one trajectory per sequence)")
    s.add_argument("--system", choices=SYSTEMS, default=None, help="override the system label")
    s.add_argument("--plot-csv", default=None, help="also export (sequence, frame, realization, dim, value) rows")
    s.add_argument("--out", required=True, help="output directory for trajectory CSV files")

    s = sub.add_parser("eval", parents=[common], help="objective evaluation report")
    s.add_argument("--ckpt", required=True, help="generator checkpoint")
    s.add_argument("--data", required=True, help="held-out raw dataset")
    s.add_argument("--oracle", default=None, help="oracle spec JSON (enables oracle moment checks)")
    s.add_argument("--draws", type=_pos_int, default=1000, help="draws per context for moment checks")
    s.add_argument("--realizations", type=_pos_int, default=5, help="realizations for variation scores")
    s.add_argument("--format", choices=["structured", "text"], default="structured", help="report format")
    s.add_argument("--out", required=True, help="report path")

    s = sub.add_parser("inspect", parents=[common], help="describe a dataset, checkpoint or report")
    s.add_argument("path", help="file to inspect")
    return p


# ------------------------------------------------------------------ helpers


class _Ctx:
    def __init__(self, args):
        self.args = args
        self.out_dir = Path(args.out_dir).resolve()

    def out_path(self, p) -> Path:
        path = Path(p)
        path = (Path.cwd() / path).resolve() if not path.is_absolute() else path.resolve()
        if path != self.out_dir and self.out_dir not in path.parents:
            raise UsageError(f"output {p} lies outside --out-dir {self.out_dir}")
        path.parent.mkdir(parents=True, exist_ok=True)
        return path


def _train_config(args, **overrides) -> TrainConfig:
    base = load_config(args.config) if args.config else {}
    try:
        cfg = TrainConfig.from_dict(base)
        if args.seed is not None:
            overrides["seed"] = args.seed
        return cfg.replace(**overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def _print_config(command: str, resolved: dict) -> None:
    print(json.dumps({"command": command, "resolved_config": resolved}, sort_keys=True, default=str))
    sys.stdout.flush()


def _relpath(target: Path, start_dir: Path) -> str:
    return os.path.relpath(target, start_dir)


# --------------------------------------------------------------- commands


def cmd_gen_data(args, ctx: _Ctx) -> int:
    seed = args.seed if args.seed is not None else 0
    spec = OracleSpec.load(args.spec) if args.spec else oracle_preset(args.family, args.codes)
    _print_config("gen-data", {"seed": seed, "seqs": args.seqs, "frames": args.frames, "oracle": spec.to_dict()})
    out = ctx.out_path(args.out)
    ds = synth_oracle_dataset(spec, args.seqs, args.frames, rng_new(seed))
    write_dataset(ds, out)
    spec.save(ctx.out_path(str(out) + ".oracle.json"))
    log.info("wrote %s (%d sequences, %d frames)", out, len(ds.sequences), ds.n_frames)
    return 0


def cmd_train_baseline(args, ctx: _Ctx) -> int:
    cfg = _train_config(args, baseline_epochs=args.epochs, learning_rate=args.lr, chunk_length=args.chunk_length,
                        baseline_hidden=args.hidden, bottleneck_layer=args.bottleneck_layer,
                        bottleneck_dim=args.bottleneck_dim)
    _print_config("train-baseline", cfg.to_dict())
    out = ctx.out_path(args.out)
    log_path = ctx.out_path(args.log) if args.log else None
    ds = read_dataset(args.data)
    pds, stats = prepare_dataset(ds, cfg)
    res = train_baseline(pds, cfg, rng_new(cfg.seed))
    save_checkpoint(res.params, res.optstate, out)
    write_meta(out, {"kind": "baseline", "norm": stats.to_dict(), "windows": list(cfg.windows),
                     "bottleneck_layer": cfg.bottleneck_index, "noise_dim": cfg.noise_dim,
                     "config": cfg.to_dict(), "target_names": ds.target_names, "context_names": ds.context_names})
    if log_path:
        res.log.write(log_path)
    log.info("baseline: %d steps, final loss %.6g -> %s", len(res.log.records),
             res.log.records[-1]["loss"] if res.log.records else float("nan"), out)
    return 0


def cmd_extract_bottleneck(args, ctx: _Ctx) -> int:
    meta = read_meta(args.ckpt)
    if meta.get("kind") != "baseline":
        raise FormatError(f"{args.ckpt}: not a baseline checkpoint")
    cfg = TrainConfig.from_dict(meta["config"])
    layer = args.layer or int(meta["bottleneck_layer"])
    _print_config("extract-bottleneck", {"layer": layer, "baseline": str(args.ckpt), "config": cfg.to_dict()})
    out = ctx.out_path(args.out)
    params, _ = load_checkpoint(args.ckpt)
    pds, _ = prepare_dataset(read_dataset(args.data), cfg, NormStats.from_dict(meta["norm"]))
    bds = extract_bottleneck_dataset(params, pds, layer)
    write_dataset(bds, out)
    bmeta = dict(meta, kind="bottleneck", bottleneck_layer=layer,
                 baseline=_relpath(Path(args.ckpt).resolve(), out.parent))
    write_meta(out, bmeta)
    log.info("bottleneck layer %d (%d dims) -> %s", layer, bds.context_dim, out)
    return 0


def cmd_train_generator(args, ctx: _Ctx) -> int:
    bmeta = read_meta(args.data)
    if bmeta.get("kind") != "bottleneck":
        raise FormatError(f"{args.data}: not a bottleneck dataset (missing extract-bottleneck metadata)")
    file_cfg = load_config(args.config) if args.config else {}
    base = dict(bmeta["config"])
    base.update(file_cfg)
    try:
        cfg = TrainConfig.from_dict(base).replace(
            seed=args.seed, lam=args.lam, generator_epochs=args.epochs, learning_rate=args.lr,
            chunk_length=args.chunk_length, noise_dim=args.noise_dim, generator_hidden=args.hidden,
            loss_placement=args.loss_placement, input_kernel=args.input_kernel, bandwidth_rule=args.bandwidth_rule)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    _print_config("train-generator", cfg.to_dict())
    out = ctx.out_path(args.out)
    log_path = ctx.out_path(args.log) if args.log else None
    bds = read_dataset(args.data)
    res = train_generator(bds, cfg, rng_new(cfg.seed), checkpoint_dir=out.parent)
    save_checkpoint(res.params, res.optstate, out)
    base_abs = (Path(args.data).resolve().parent / bmeta["baseline"]).resolve()
    gmeta = dict(bmeta, kind="generator", config=cfg.to_dict(), noise_dim=cfg.noise_dim,
                 baseline=_relpath(base_abs, out.parent),
                 kernels={k: {"sigma2": v.sigma2, "lambda": v.lam, "jitter": v.jitter} for k, v in res.kernels.items()})
    if cfg.mlpg_variances == "global":
        gmeta["mlpg_variances"] = bds.targets().astype(np.float64).var(axis=0).tolist()
    write_meta(out, gmeta)
    if log_path:
        res.log.write(log_path)
    log.info("generator: %d steps, sigma2 out %.6g in %.6g -> %s", len(res.log.records),
             res.kernels["output"].sigma2, res.kernels["input"].sigma2, out)
    return 0


def _write_traj_csv(path: Path, traj: np.ndarray, names):
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in traj:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def cmd_sample(args, ctx: _Ctx) -> int:
    seed = args.seed if args.seed is not None else 0
    model = SynthesisModel.load(args.ckpt)
    system = args.system or ("pro_without_rand" if args.deterministic else "pro_with_rand")
    if model.generator is None and system != "conv":
        raise FormatError(f"{args.ckpt}: baseline checkpoint can only sample --system conv")
    n_real = 1 if system != "pro_with_rand" else args.realizations
    _print_config("sample", {"seed": seed, "system": system, "realizations": n_real, "ckpt": str(args.ckpt)})
    out = ctx.out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = read_meta(args.ckpt)
    names = meta.get("target_names") or [f"y{i}" for i in range(model.static_dim)]
    ds = read_dataset(args.data)
    root = rng_new(seed)
    plot_rows = []
    for i, (x, _) in enumerate(ds.sequences):
        for j in range(n_real):
            traj = model.trajectory(np.asarray(x, np.float64), root.split(i).split(j), system)
            tag = "det" if n_real == 1 and system != "pro_with_rand" else f"r{j}"
            _write_traj_csv(out / f"seq{i:04d}_{tag}.csv", traj, names)
            if args.plot_csv:
                for t, row in enumerate(traj):
                    for d, v in enumerate(row):
                        plot_rows.append(f"{i},{t},{j},{d},{float(v)!r}")
    if args.plot_csv:
        with open(ctx.out_path(args.plot_csv), "w") as fh:
            fh.write("sequence,frame,realization,dim,value\n")
            fh.write("".join(r + "\n" for r in plot_rows))
    log.info("sampled %d sequences x %d realizations -> %s", len(ds.sequences), n_real, out)
    return 0


def cmd_eval(args, ctx: _Ctx) -> int:
    seed = args.seed if args.seed is not None else 0
    model = SynthesisModel.load(args.ckpt)
    if model.generator is None:
        raise FormatError(f"{args.ckpt}: eval needs a generator checkpoint")
    meta = read_meta(args.ckpt)
    resolved = {"seed": seed, "draws": args.draws, "realizations": args.realizations,
                "train_config": meta.get("config"), "kernels": meta.get("kernels")}
    _print_config("eval", resolved)
    out = ctx.out_path(args.out)
    ds = read_dataset(args.data)
    ckpt_hash = file_hash(args.ckpt)
    report = EvalReport({"seed": seed, "checkpoint": ckpt_hash, "config_hash": config_hash(resolved),
                         "data": file_hash(args.data), "systems": list(SYSTEMS)})
    root = rng_new(seed)
    if args.oracle:
        spec = OracleSpec.load(args.oracle)
        grid = context_grid(spec)
        for k, system in enumerate(SYSTEMS):
            rows = conditional_moment_error(model_sampler(model, spec, system), spec, grid, args.draws,
                                            root.split(100 + k), scale=model.stats.target_std)
            report.add_table_rows("conditional_moments", system, rows)
            report.add_metric("mean_error_avg", float(np.mean([r.mean_error for r in rows])), system)
            report.add_metric("std_ratio_min", float(np.min([r.std_ratio.min() for r in rows])), system)
            report.add_metric("std_ratio_max", float(np.max([r.std_ratio.max() for r in rows])), system)
    targets = ds.targets().astype(np.float64)
    for k, system in enumerate(SYSTEMS):
        scores, gen_frames = [], []
        for i, (x, _) in enumerate(ds.sequences):
            x = np.asarray(x, np.float64)
            if i < MAX_VARIATION_SEQS:
                scores.append(variation_score(lambda c, r, s=system: model.trajectory(c, r, s), x,
                                              max(2, args.realizations), root.split(200 + k).split(i)))
            gen_frames.append(model.trajectory(x, root.split(300 + k).split(i), system))
        if scores:
            report.add_metric("variation_score", float(np.mean(scores)), system)
        if len(targets):
            report.add_metric("two_sample_mmd", two_sample_mmd(np.vstack(gen_frames), targets, rng=root.split(400)), system)
    emit_report(report, out, args.format)
    log.info("report with %d metrics -> %s", len(report.metrics), out)
    return 0


def cmd_inspect(args, ctx: _Ctx) -> int:
    _print_config("inspect", {"path": args.path})
    with open(args.path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"MMD1":
        ds = read_dataset(args.path)
        lengths = [len(x) for x, _ in ds.sequences]
        info = {"type": "dataset", "sequences": len(ds.sequences), "frames": int(sum(lengths)),
                "context_dim": ds.context_dim, "target_dim": ds.target_dim, "frame_shift_s": ds.frame_shift_s,
                "context_names": ds.context_names[:8], "target_names": ds.target_names}
    elif magic == b"MMNC":
        params, opt = load_checkpoint(args.path)
        info = {"type": "checkpoint", "layout": list(params.layout.dims), "parameters": int(params.flat().size),
                "adam_step": None if opt is None else opt.step, "sha256_16": file_hash(args.path)}
    else:
        try:
            rep = read_report(args.path)
        except (ValueError, UnicodeDecodeError) as exc:
            raise FormatError(f"{args.path}: unrecognized file type") from exc
        info = {"type": "report", "header": rep.header, "metrics": len(rep.metrics), "table_rows": len(rep.tables)}
    print(json.dumps(info, indent=1, sort_keys=True, default=str))
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-baseline": cmd_train_baseline,
    "extract-bottleneck": cmd_extract_bottleneck,
    "train-generator": cmd_train_generator,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            return COMMANDS[args.command](args, _Ctx(args))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except (MomentGenError, OSError, ValueError, KeyError) as exc:
        # DataError, InvalidSpec, JSON decode errors and malformed sidecars
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
