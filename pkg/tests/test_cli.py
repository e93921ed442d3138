import subprocess
import sys

import numpy as np
import pytest

from lkstopo.cli import main
from lkstopo.config import parse_config
from lkstopo.vtk import read_vtk

from test_config import MINIMAL


@pytest.fixture
def case_file(tmp_path):
    p = tmp_path / "mini.cfg"
    p.write_text(MINIMAL + "\n[optimizer]\nmax_steps = 3\n")
    return p


def test_describe_prints_resolved_config(capsys):
    assert main(["describe", "rotor2d_small"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("version = 1") and parse_config(out).name == "rotor2d_small"


def test_usage_errors_exit_2(capsys, tmp_path):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["describe", "no_such_case"]) == 2
    assert "no_such_case" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text(MINIMAL.replace("n_steps = 20", "n_steps = 20\nbogus = 1"))
    assert main(["describe", str(bad)]) == 2
    assert main(["verify", "taylor-couette", "--scale", "0.3"]) == 2
    assert main(["verify", "sensitivity", "--fd-step", "0.5"]) == 2
    assert main(["optimize", "rotor2d_small", "--threads", "0"]) == 2


def test_help_exits_0():
    assert main(["--help"]) == 0


def test_optimize_run_directory(case_file, tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["optimize", str(case_file), "--output-dir", str(out), "--max-steps", "2", "--seed", "7"]) == 0
    run = out / "optimize-mini"
    for name in ("case.cfg", "history.csv", "timing.csv", "checkpoint.npz", "gamma_final.vtk", "gamma_final.npy", "summary.txt"):
        assert (run / name).exists(), name
    cfg = parse_config((run / "case.cfg").read_text())
    assert cfg.optimizer.max_steps == 2 and cfg.optimizer.seed == 7
    grid, fields = read_vtk(run / "gamma_final.vtk")
    assert grid.shape == (8, 8) and set(fields) == {"gamma_raw", "gamma_filtered", "gamma"}
    assert "steps=2" in (run / "summary.txt").read_text()
    assert main(["optimize", str(case_file), "--output-dir", str(out), "--max-steps", "1"]) == 0
    assert (out / "optimize-mini_1").is_dir()


def test_simulate_run_directory(case_file, tmp_path):
    out = tmp_path / "runs"
    np.save(tmp_path / "g.npy", np.full((8, 8), 0.7))
    assert main(["simulate", str(case_file), "--output-dir", str(out), "--design", str(tmp_path / "g.npy"), "--periods", "2"]) == 0
    run = out / "simulate-mini"
    series = (run / "series.csv").read_text().splitlines()
    assert series[0] == "step,integrand_mean" and len(series) == 1 + 41
    assert (run / "objective.csv").read_text().count("\n") == 3
    grid, fields = read_vtk(run / "flow_final.vtk")
    assert fields["u"].shape == (2, 20, 20)
    assert main(["simulate", str(case_file), "--output-dir", str(out), "--design", "reference"]) == 2
    np.save(tmp_path / "wrong.npy", np.zeros((3, 3)))
    assert main(["simulate", str(case_file), "--output-dir", str(out), "--design", str(tmp_path / "wrong.npy")]) == 2


def test_threads_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("LKSTOPO_THREADS", "many")
    assert main(["describe", "rotor2d_small"]) == 2
    monkeypatch.setenv("LKSTOPO_THREADS", "1")
    assert main(["describe", "rotor2d_small"]) == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lkstopo", "describe", "pump2d_small"], capture_output=True, text=True)
    assert proc.returncode == 0 and 'name = "pump2d_small"' in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "lkstopo", "unknown"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr
