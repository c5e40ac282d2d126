"""Run the full CLI pipeline on a synthetic oracle task.

    python3 scripts/run_pipeline.py --out-dir runs/hetero --family heteroscedastic

Writes the dataset, both checkpoints, sampled trajectories and a text plus
structured evaluation report under ``--out-dir``.
"""

import argparse
import sys
from pathlib import Path

from momentgen.cli import run
from momentgen.dataio import ORACLE_FAMILIES


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, required=True)
    ap.add_argument("--family", default="heteroscedastic",
                    choices=ORACLE_FAMILIES)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--seqs", type=int, default=64)
    ap.add_argument("--frames", type=int, default=400)
    ap.add_argument("--config", type=Path, help="JSON training config")
    ap.add_argument("--threads", type=int, default=1)
    a = ap.parse_args(argv)

    d = a.out_dir
    d.mkdir(parents=True, exist_ok=True)
    f = lambda name: str(d / name)
    common = ["--threads", str(a.threads), "--out-dir", str(d), "--seed", str(a.seed)]
    cfg = ["--config", str(a.config)] if a.config else []
    steps = [
        ["gen-data", "--family", a.family, "--seqs", str(a.seqs), "--frames", str(a.frames), "--out", f("train.mmd")],
        ["gen-data", "--family", a.family, "--seqs", "8", "--frames", str(a.frames), "--out", f("test.mmd"),
         "--seed", str(a.seed + 1)],
        ["train-baseline", *cfg, "--data", f("train.mmd"), "--out", f("base.mmnc"), "--log", f("base.log.jsonl")],
        ["extract-bottleneck", "--ckpt", f("base.mmnc"), "--data", f("train.mmd"), "--out", f("bn.mmd")],
        ["train-generator", *cfg, "--data", f("bn.mmd"), "--out", f("gen.mmnc"), "--log", f("gen.log.jsonl")],
        ["sample", "--ckpt", f("gen.mmnc"), "--data", f("test.mmd"), "--realizations", "5", "--out", f("traj")],
        ["eval", "--ckpt", f("gen.mmnc"), "--data", f("test.mmd"), "--oracle", f("train.mmd.oracle.json"),
         "--out", f("report.jsonl")],
        ["eval", "--ckpt", f("gen.mmnc"), "--data", f("test.mmd"), "--oracle", f("train.mmd.oracle.json"),
         "--format", "text", "--out", f("report.txt")],
    ]
    for argv_ in steps:
        print("momentgen", " ".join(argv_), flush=True)
        # a step's own --seed comes after the common flags and wins
        code = run([argv_[0], *common, *argv_[1:]])
        if code:
            return code
    print(Path(f("report.txt")).read_text())
    return 0


if __name__ == "__main__":
    sys.exit(main())
