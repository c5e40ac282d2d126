import json

import numpy as np
import pytest

from momentgen.cli import build_parser, run
from momentgen.dataio import read_dataset
from momentgen.network import load_checkpoint

SUBCOMMANDS = ["gen-data", "train-baseline", "extract-bottleneck", "train-generator", "sample", "eval", "inspect"]
SMALL = {"baseline_epochs": 2, "generator_epochs": 1, "baseline_hidden": [16, 8], "generator_hidden": [16],
         "chunk_length": 50}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A tiny trained pipeline shared by the CLI tests."""
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.json").write_text(json.dumps(SMALL))
    common = ["--out-dir", str(d), "--threads", "1"]
    steps = [
        ["gen-data", "--family", "heteroscedastic", "--seqs", "4", "--frames", "100", "--seed", "7",
         "--out", str(d / "data.mmd")],
        ["gen-data", "--seqs", "2", "--frames", "60", "--seed", "8", "--out", str(d / "test.mmd")],
        ["train-baseline", "--config", str(d / "cfg.json"), "--data", str(d / "data.mmd"), "--out", str(d / "base.mmnc")],
        ["extract-bottleneck", "--ckpt", str(d / "base.mmnc"), "--data", str(d / "data.mmd"), "--out", str(d / "bn.mmd")],
        ["train-generator", "--data", str(d / "bn.mmd"), "--out", str(d / "gen.mmnc"), "--log", str(d / "gen.jsonl")],
    ]
    for argv in steps:
        assert run(argv + common) == 0, argv
    return d


def test_every_subcommand_has_help(capsys):
    parser = build_parser()
    for sub in SUBCOMMANDS:
        assert run([sub, "--help"]) == 0
        out = capsys.readouterr().out
        assert "usage:" in out
    # every option carries help text
    for action in parser._subparsers._group_actions[0].choices.values():
        for a in action._actions:
            assert a.help, (action.prog, a.option_strings)


def test_gen_data(workdir, capsys):
    ds = read_dataset(workdir / "data.mmd")
    assert len(ds.sequences) == 4 and ds.n_frames == 400
    assert json.loads((workdir / "data.mmd.oracle.json").read_text())["family"] == "heteroscedastic"


def test_prints_resolved_config(workdir, capsys):
    assert run(["inspect", str(workdir / "gen.mmnc"), "--out-dir", str(workdir)]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert json.loads(first)["command"] == "inspect"


def test_generator_meta_and_log(workdir):
    meta = json.loads((workdir / "gen.mmnc.meta.json").read_text())
    assert meta["kind"] == "generator" and meta["baseline"] == "base.mmnc"
    assert meta["config"]["generator_hidden"] == [16] and meta["kernels"]["input"]["lambda"] == 0.01
    params, opt = load_checkpoint(workdir / "gen.mmnc")
    assert params.layout.input_dim == 8 + 3 and opt.step == 8
    assert len((workdir / "gen.jsonl").read_text().splitlines()) == 8


def test_sample_files_and_rerun(workdir):
    def go(out):
        assert run(["sample", "--ckpt", str(workdir / "gen.mmnc"), "--data", str(workdir / "test.mmd"),
                    "--realizations", "5", "--seed", "3", "--out", str(workdir / out), "--out-dir", str(workdir)]) == 0
        return {p.name: p.read_bytes() for p in sorted((workdir / out).iterdir())}
    a, b = go("traj_a"), go("traj_b")
    assert len(a) == 2 * 5 and a == b
    assert len({v for v in a.values()}) == 10  # realizations differ


def test_sample_deterministic_mode(workdir):
    def go(out):
        assert run(["sample", "--ckpt", str(workdir / "gen.mmnc"), "--data", str(workdir / "test.mmd"),
                    "--deterministic", "--out", str(workdir / out), "--out-dir", str(workdir),
                    "--plot-csv", str(workdir / (out + ".csv"))]) == 0
        return {p.name: p.read_bytes() for p in sorted((workdir / out).iterdir())}
    a, b = go("det_a"), go("det_b")
    assert sorted(a) == ["seq0000_det.csv", "seq0001_det.csv"] and a == b
    rows = (workdir / "det_a.csv").read_text().splitlines()
    assert rows[0] == "sequence,frame,realization,dim,value" and len(rows) == 1 + 2 * 60 * 2


def test_eval_report(workdir):
    out = workdir / "report.jsonl"
    assert run(["eval", "--ckpt", str(workdir / "gen.mmnc"), "--data", str(workdir / "test.mmd"),
                "--oracle", str(workdir / "data.mmd.oracle.json"), "--draws", "100", "--out", str(out),
                "--out-dir", str(workdir)]) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert recs[0]["record"] == "header" and {"config_hash", "seed", "checkpoint"} <= set(recs[0])
    names = {(r["name"], r["system"]) for r in recs if r["record"] == "metric"}
    assert ("variation_score", "conv") in names and ("two_sample_mmd", "pro_with_rand") in names
    var = {r["system"]: r["value"] for r in recs if r["record"] == "metric" and r["name"] == "variation_score"}
    assert var["conv"] == 0.0 and var["pro_without_rand"] == 0.0 and var["pro_with_rand"] > 0
    assert sum(r["record"] == "table_row" for r in recs) == 3 * 9


def test_negative_lambda_is_usage_error(workdir, capsys):
    code = run(["train-generator", "--lambda", "-1", "--data", str(workdir / "bn.mmd"),
                "--out", str(workdir / "x.mmnc"), "--out-dir", str(workdir)])
    assert code == 1 and "--lambda" in capsys.readouterr().err


def test_unknown_flag_is_error(capsys):
    assert run(["gen-data", "--out", "x.mmd", "--bogus"]) == 1
    assert "unrecognized" in capsys.readouterr().err
    assert run([]) == 1


def test_outside_out_dir(workdir, tmp_path, capsys):
    assert run(["gen-data", "--out", str(tmp_path / "x.mmd"), "--out-dir", str(workdir)]) == 1
    assert "outside" in capsys.readouterr().err
    assert not (tmp_path / "x.mmd").exists()


def test_data_errors(workdir, capsys):
    (workdir / "junk.mmd").write_bytes(b"MMD1\x01\0")
    assert run(["inspect", str(workdir / "junk.mmd")]) == 2
    assert run(["sample", "--ckpt", str(workdir / "missing.mmnc"), "--data", str(workdir / "test.mmd"),
                "--out", str(workdir / "t"), "--out-dir", str(workdir)]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 2 and all(e.startswith("data error:") for e in err)


def test_numerical_error_exit_code(workdir, capsys):
    (workdir / "bad.json").write_text(json.dumps({"lam": 0, "jitter": 0, "generator_epochs": 1, "chunk_length": 100, "input_kernel": "context"}))
    code = run(["train-generator", "--config", str(workdir / "bad.json"), "--data", str(workdir / "bn.mmd"),
                "--out", str(workdir / "bad.mmnc"), "--out-dir", str(workdir)])
    assert code == 3 and "not positive definite" in capsys.readouterr().err


def test_config_file_and_flag_precedence(workdir, capsys):
    (workdir / "c2.json").write_text(json.dumps({**SMALL, "lam": 0.5}))
    assert run(["train-generator", "--config", str(workdir / "c2.json"), "--lambda", "0.2", "--epochs", "0",
                "--data", str(workdir / "bn.mmd"), "--out", str(workdir / "g0.mmnc"), "--out-dir", str(workdir)]) == 0
    resolved = json.loads(capsys.readouterr().out.splitlines()[0])["resolved_config"]
    assert resolved["lam"] == 0.2 and resolved["generator_epochs"] == 0
    (workdir / "c3.json").write_text(json.dumps({"lambda": 1}))
    assert run(["train-baseline", "--config", str(workdir / "c3.json"), "--data", str(workdir / "data.mmd"),
                "--out", str(workdir / "b3.mmnc"), "--out-dir", str(workdir)]) == 1


def test_inspect_dataset(workdir, capsys):
    assert run(["inspect", str(workdir / "bn.mmd")]) == 0
    info = json.loads(capsys.readouterr().out.split("\n", 1)[1])
    assert info["type"] == "dataset" and info["context_dim"] == 8 and info["target_dim"] == 6
