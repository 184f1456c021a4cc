import os
import subprocess
import sys

import numpy as np
import pytest

from flslab import io
from flslab.cli import main
from flslab.mixture import Dataset


def _records(path):
    header, rows = io.read_csv(path)
    return [dict(zip(header, r)) for r in rows]


SMALL = ["--d", "8", "--n", "12", "--kappa", "2", "--sigma", "0.5"]


def test_generate_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["generate", "--out", str(a), "--seed", "4", *SMALL]) == 0
    assert main(["generate", "--out", str(b), "--seed", "4", *SMALL]) == 0
    for name in ("dataset.csv", "report.txt", "config.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    data = io.read_dataset(a / "dataset.csv")
    assert data.X.shape == (12, 8)


def test_invalid_configuration_exit_code(tmp_path):
    assert main(["generate", "--out", str(tmp_path), "--d", "0"]) == 2
    cfg = tmp_path / "bad.txt"
    cfg.write_text("no_such_key=1\n")
    assert main(["generate", "--out", str(tmp_path), "--config", str(cfg)]) == 2


def test_rejection_exhausted_exit_code(tmp_path):
    code = main(["generate", "--out", str(tmp_path), "--d", "64", "--n", "40", "--kappa", "0.5",
                 "--lambda-min", "0.9", "--max-tries", "3"])
    assert code == 3


def test_divergence_exit_code(tmp_path):
    # a small alpha keeps t_alpha positive, so at least one step is taken before the stop check
    X = np.full((4, 3), 1e150)
    X[1::2] *= -1
    path = tmp_path / "huge.csv"
    io.write_dataset(path, Dataset(X, np.array([1.0, 1.0, -1.0, -1.0])))
    code = main(["train", "--out", str(tmp_path / "run"), "--data", str(path), "--h", "4",
                 "--alpha", "1e-3", "--max-time", "1"])
    assert code == 4
    assert (tmp_path / "run" / "trajectory.csv").exists()


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# comment\nseed=5\nd=6\nn=10\n")
    assert main(["generate", "--out", str(tmp_path / "c"), "--config", str(cfg)]) == 0
    got = io.read_kv(tmp_path / "c" / "config.txt")
    assert got["seed"] == "5" and got["d"] == "6"
    monkeypatch.setenv("FLSLAB_SEED", "9")
    assert main(["generate", "--out", str(tmp_path / "e"), "--config", str(cfg)]) == 0
    assert io.read_kv(tmp_path / "e" / "config.txt")["seed"] == "9"
    assert main(["generate", "--out", str(tmp_path / "f"), "--config", str(cfg), "--seed", "2", "--d", "7"]) == 0
    got = io.read_kv(tmp_path / "f" / "config.txt")
    assert got["seed"] == "2" and got["d"] == "7" and got["n"] == "10"


def test_train_outputs_and_config_roundtrip(tmp_path):
    args = ["train", "--out", str(tmp_path / "a"), *SMALL, "--h", "8", "--alpha", "1e-4",
            "--etas", "0.1", "0.2", "--max-time", "20"]
    assert main(args) == 0
    out = tmp_path / "a"
    for name in ("trajectory.csv", "checkpoint.txt", "partition.csv", "stop.txt", "config.txt"):
        assert (out / name).exists()
    stop = io.read_kv(out / "stop.txt")
    assert stop["eta_0.1.reached"] == "true"
    assert main(["train", "--out", str(tmp_path / "b"), "--config", str(out / "config.txt")]) == 0
    for name in ("trajectory.csv", "stop.txt", "partition.csv"):
        assert (out / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_command(tmp_path):
    args = ["sweep", "--out", str(tmp_path / "s"), *SMALL, "--h", "8", "--alphas", "1e-4", "1e-3",
            "--seeds", "0", "--mc-samples", "10000", "--step", "1e-4", "--max-time", "20", "--jobs", "1"]
    assert main(args) == 0
    out = tmp_path / "s"
    rows = _records(out / "sweep.csv")
    assert len(rows) == 2
    for name in ("long.csv", "timing.csv", "meta.txt", "ushape.csv", "psi_stability.csv"):
        assert (out / name).exists()
    assert main(["sweep", "--out", str(tmp_path / "r"), "--config", str(out / "config.txt"), "--jobs", "2"]) == 0
    assert (out / "sweep.csv").read_bytes() == (tmp_path / "r" / "sweep.csv").read_bytes()


def _stats(tmp_path, **kw):
    base = dict(alpha=1e-4, n_plus=10, h=16, x_max=2.0, x_min=1.0, W_ref_max=1.5, x_plus_norm=12.0,
                t1=0.01, t_alpha=0.05, lam=0.0)
    base.update(kw)
    path = tmp_path / "stats.txt"
    io.write_kv(path, base)
    return path


def test_bounds_command(tmp_path):
    out = tmp_path / "b"
    assert main(["bounds", "--out", str(out), "--stats", str(_stats(tmp_path))]) == 0
    table = {r["quantity"]: r for r in _records(out / "bounds.csv")}
    assert float(table["phase1_lower"]["value"]) == pytest.approx(0.441255571385646844, rel=1e-13)
    assert table["g_flow"]["status"] == "InapplicableError"
    bad = tmp_path / "bad.txt"
    bad.write_text("alpha=1\n")
    assert main(["bounds", "--out", str(out), "--stats", str(bad)]) == 2


def test_verify_filter_and_unknown(tmp_path):
    assert main(["verify", "--out", str(tmp_path), "--suite", "gradient"]) == 0
    rows = _records(tmp_path / "verify.csv")
    assert [r["suite"] for r in rows] == ["gradient"] and rows[0]["passed"] == "true"
    assert main(["verify", "--out", str(tmp_path), "--suite", "nope"]) == 2


def test_fault_injection_is_caught(tmp_path):
    env = {**os.environ, "FLSLAB_FAULT": "sigma-prime-one"}
    proc = subprocess.run([sys.executable, "-m", "flslab.cli", "verify", "--suite", "gradient",
                           "--out", str(tmp_path)], env=env, capture_output=True, text=True)
    assert proc.returncode == 1, proc.stdout + proc.stderr
    assert "FAIL" in proc.stdout
