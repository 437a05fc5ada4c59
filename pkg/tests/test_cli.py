import os
import subprocess
import sys

import numpy as np
import pytest

from stgn.cli import main, parse_args, UsageError
from stgn.evalbench import parse_report

TINY_CFG = """\
train_n = 8
bench_n = 8
width = 16
heads = 2
depth = 1
enc_depth_text = 1
enc_depth_vis = 1
n_queries = 2
pretrain_steps = 2
train_steps = 2
batch = 2
pretrain_batch = 2
num_steps = 3
gate_steps = 1
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY_CFG + f"data_dir = {tmp_path / 'data'}\nout_dir = {tmp_path / 'run'}\n")
    return str(p)


def test_parse_args_forms():
    cmd, path, ov = parse_args(["train", "--config", "a.cfg", "--lr", "0.1", "--no-injection", "--seed=3", "--injection"])
    assert (cmd, path) == ("train", "a.cfg")
    assert ov == [("lr", "0.1"), ("injection", "false"), ("seed", "3"), ("injection", "true")]
    with pytest.raises(UsageError):
        parse_args([])
    with pytest.raises(UsageError):
        parse_args(["fly"])
    with pytest.raises(UsageError):
        parse_args(["train", "stray"])


def test_usage_errors_exit_1(cfg, capsys):
    assert main(["nope"]) == 1
    assert main(["train", "--config", cfg, "--bogus", "1"]) == 1
    assert main(["train", "--config", "/no/such.cfg"]) == 1
    assert "usage: stgn" in capsys.readouterr().err


def test_runtime_errors_exit_2(cfg, tmp_path, capsys):
    assert main(["eval", "--config", cfg]) == 2  # no data or checkpoint yet
    assert "error" in capsys.readouterr().err
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["gen-data", "--config", cfg, "--data-dir", str(blocker)]) == 2


def test_gen_data_counts_and_determinism(cfg, tmp_path):
    assert main(["gen-data", "--config", cfg]) == 0
    assert main(["gen-data", "--config", cfg, "--data-dir", str(tmp_path / "again")]) == 0
    manifest = tmp_path / "data" / "bench" / "manifest.tsv"
    assert len(manifest.read_text(encoding="utf-8").splitlines()) == 8
    for split in ("train", "bench"):
        a, b = tmp_path / "data" / split, tmp_path / "again" / split
        names = sorted(n for n in os.listdir(a) if not n.startswith("config_"))
        assert names == sorted(n for n in os.listdir(b) if not n.startswith("config_"))
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_full_pipeline(cfg, tmp_path):
    run = tmp_path / "run"
    assert main(["gen-data", "--config", cfg]) == 0
    assert main(["pretrain-encoder", "--config", cfg]) == 0
    assert (run / "encoder.ckpt").exists()
    log = (run / "pretrain_log.tsv").read_text().splitlines()
    assert log[0].startswith("# config_hash=") and len(log) == 3
    assert main(["train", "--config", cfg, "--encoder-ckpt", str(run / "encoder.ckpt")]) == 0
    assert (run / "model.ckpt").exists()

    assert main(["sample", "--config", cfg, "--sample-index", "1"]) == 0
    ppm = run / "samples" / "bench00001.ppm"
    head = ppm.read_bytes()[:40]
    assert head.startswith(b"P6\n# config_hash=")
    tsv = (run / "samples" / "samples.tsv").read_text().splitlines()
    assert tsv[0].startswith("# config_hash=") and len(tsv) == 5

    assert main(["eval", "--config", cfg, "--report", str(run / "on.tsv")]) == 0
    assert main(["eval", "--config", cfg, "--no-injection", "--report", str(run / "off.tsv")]) == 0
    h_on, on = parse_report((run / "on.tsv").read_text())
    h_off, off = parse_report((run / "off.tsv").read_text())
    assert set(on) == set(off) and on["all"].n == 8
    assert h_on["checkpoint"] == h_off["checkpoint"] and h_on["config_hash"] != h_off["config_hash"]


def test_train_rejects_model_checkpoint_as_encoder(cfg, tmp_path):
    run = tmp_path / "run"
    assert main(["gen-data", "--config", cfg]) == 0
    assert main(["pretrain-encoder", "--config", cfg]) == 0
    assert main(["train", "--config", cfg]) == 0
    assert main(["train", "--config", cfg, "--encoder-ckpt", str(run / "model.ckpt")]) == 2


def test_resume_pretraining_matches_straight_run(cfg, tmp_path):
    assert main(["gen-data", "--config", cfg]) == 0
    assert main(["pretrain-encoder", "--config", cfg, "--pretrain-steps", "4", "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["pretrain-encoder", "--config", cfg, "--pretrain-steps", "2", "--out-dir", str(tmp_path / "b")]) == 0
    assert main(["pretrain-encoder", "--config", cfg, "--pretrain-steps", "4", "--out-dir", str(tmp_path / "b"),
                 "--resume", str(tmp_path / "b" / "encoder.ckpt")]) == 0  # fmt: skip
    from stgn.checkpoint import load

    a, _ = load(tmp_path / "a" / "encoder.ckpt")
    b, _ = load(tmp_path / "b" / "encoder.ckpt")
    for k in a:
        assert np.array_equal(a[k], b[k]), k


def test_module_entry_point(tmp_path):
    env = dict(os.environ, PYTHONPATH=os.pathsep.join(sys.path))
    out = subprocess.run([sys.executable, "-m", "stgn", "--help"], capture_output=True, text=True, env=env)
    assert out.returncode == 1 and "usage: stgn" in out.stderr
