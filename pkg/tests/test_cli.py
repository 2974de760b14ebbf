import csv
import subprocess
import sys

import numpy as np
import pytest

from permoptim import cli
from permoptim import perm_optim as po
from permoptim.checks import bundled_checkpoint_path

TINY_CFG = """\
task = sort
n = 4
sets = 64
batch = 16
chunk = 16
epochs = 2
T = 2
hidden = 4
eval-sets = 32
intervals = 0:1, 1000:1001
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CFG)
    return path


def run(*argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def test_train_writes_checkpoint_and_metrics(tmp_path, cfg, capsys):
    out = tmp_path / "a.popt"
    assert run("train", "--config", cfg, "--seed", 3, "--out", out) == 0
    assert out.exists()
    rows = list(csv.DictReader(open(out.with_suffix(".csv"))))
    assert [r["epoch"] for r in rows] == ["0", "1", "2"]
    assert "trained 2 epochs" in capsys.readouterr().out


def test_same_seed_gives_identical_checkpoints(tmp_path, cfg):
    a, b, c = tmp_path / "a.popt", tmp_path / "b.popt", tmp_path / "c.popt"
    assert run("train", "--config", cfg, "--seed", 3, "--out", a) == 0
    assert run("train", "--config", cfg, "--seed", 3, "--out", b) == 0
    assert run("train", "--config", cfg, "--seed", 4, "--out", c) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()

    def mse_eta(path):
        return [(r["mse"], r["eta"]) for r in csv.DictReader(open(path.with_suffix(".csv")))]

    assert mse_eta(a) == mse_eta(b)


def test_eval_checkpoint_and_oracle(tmp_path, cfg, capsys):
    ckpt = tmp_path / "m.popt"
    run("train", "--config", cfg, "--out", ckpt)
    capsys.readouterr()
    out_csv = tmp_path / "eval.csv"
    assert run("eval", "--checkpoint", ckpt, "--config", cfg, "--csv", out_csv) == 0
    assert "[1000, 1001]" in capsys.readouterr().out
    assert len(list(csv.DictReader(open(out_csv)))) == 2
    assert run("eval", "--oracle", "--config", cfg, "--csv", out_csv, "--threads", 2) == 0
    accs = [float(r["exact_acc"]) for r in csv.DictReader(open(out_csv))]
    assert accs == [1.0, 1.0]


def test_usage_errors_exit_2(tmp_path, cfg):
    assert run() == 2
    assert run("train") == 2
    assert run("eval", "--config", cfg) == 2
    assert run("train", "--config", tmp_path / "missing.cfg") == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("n = 4\nlearning-rate = 1\n")
    assert run("train", "--config", bad) == 2
    assert run("inspect", "--checkpoint", "x", "--grid", "0:1", "--out", "y") == 2
    assert run("inspect", "--checkpoint", "x", "--grid", "1:0:5", "--out", "y") == 2


def test_runtime_errors_exit_1(tmp_path, cfg, capsys):
    corrupt = tmp_path / "corrupt.popt"
    corrupt.write_bytes(b"NOTPO\n" + bytes(40))
    assert run("eval", "--checkpoint", corrupt, "--config", cfg) == 1
    assert "magic" in capsys.readouterr().err
    assert run("eval", "--checkpoint", tmp_path / "absent.popt", "--config", cfg) == 1
    wrong_n = tmp_path / "n7.cfg"
    wrong_n.write_text(TINY_CFG.replace("n = 4", "n = 7"))
    ckpt = tmp_path / "m.popt"
    run("train", "--config", cfg, "--out", ckpt)
    assert run("eval", "--checkpoint", ckpt, "--config", wrong_n) == 1


def test_inspect_dumps_antisymmetric_grid(tmp_path):
    out = tmp_path / "grid.csv"
    assert run("inspect", "--checkpoint", bundled_checkpoint_path(), "--grid", "0:1:64",
               "--out", out) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 4096
    f = np.array([float(r["F"]) for r in rows]).reshape(64, 64)
    np.testing.assert_array_equal(f, -f.T)
    a = np.array([float(r["a"]) for r in rows]).reshape(64, 64)
    assert a[0, 0] == 0.0 and a[-1, 0] == 1.0


def test_gradcheck_passes_and_catches_a_planted_fault(monkeypatch, capsys):
    assert run("gradcheck", "--trials", 1) == 0
    assert "checks passed" in capsys.readouterr().out
    real = po.cost_gradient
    monkeypatch.setattr(po, "cost_gradient", lambda *a: real(*a) * 1.01)
    assert run("gradcheck", "--trials", 1) == 1
    assert "failing:" in capsys.readouterr().err


def test_selftest(capsys):
    assert run("selftest") == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "permoptim.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for command in ("train", "eval", "gradcheck", "inspect", "selftest"):
        assert command in proc.stdout
