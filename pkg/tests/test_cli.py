import json
import subprocess
import sys

import pytest

from l1sysid.cli import main

CFG = """seed = 5
n = 8
k = 2
horizon = 120
trials = 1
n_directions = 10
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CFG)
    return path


@pytest.mark.parametrize("argv, outputs", [
    (["simulate"], ["system.json", "trajectory.csv"]),
    (["estimate"], ["estimate.json"]),
    (["realize"], ["realization.json"]),
    (["bounds"], ["bounds.json"]),
    (["experiment", "markov"], ["report.csv", "report.json", "plot.gp"]),
    (["experiment", "realization"], ["report.csv", "report.json", "plot.gp"]),
])
def test_subcommands(tmp_path, cfg_path, argv, outputs, capsys):
    out = tmp_path / "out"
    assert main(argv + ["--config", str(cfg_path), "--out", str(out)]) == 0
    for name in outputs:
        assert (out / name).exists()
    json.loads(capsys.readouterr().out)


def test_seed_and_trials_override(tmp_path, cfg_path):
    out = tmp_path / "o"
    assert main(["experiment", "markov", "--config", str(cfg_path), "--out", str(out),
                 "--seed", "9", "--trials", "2"]) == 0
    data = json.loads((out / "report.json").read_text())
    assert data["config"]["seed"] == 9 and len(data["trial_seeds"]) == 2


def test_estimate_from_trajectory(tmp_path, cfg_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert main(["estimate", "--config", str(cfg_path), "--out", str(out),
                 "--trajectory", str(out / "trajectory.csv")]) == 0
    data = json.loads((out / "estimate.json").read_text())
    assert data["T"] == 120 and "err_l1" not in data


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("seed = 1\nwhat = 2\n")
    assert main(["bounds", "--config", str(bad)]) == 1
    assert main(["bounds", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert main(["bounds"]) == 1
    strict = tmp_path / "strict.cfg"
    strict.write_text("seed = 1\np = 0.3\n")
    assert main(["bounds", "--config", str(strict), "--strict-assumptions",
                 "--out", str(tmp_path / "x")]) == 1
    ok = tmp_path / "ok.cfg"
    ok.write_text(CFG)
    assert main(["estimate", "--config", str(ok), "--out", str(tmp_path / "y"),
                 "--trajectory", str(tmp_path / "nope.csv")]) == 2


def test_console_module_entry(tmp_path, cfg_path):
    proc = subprocess.run([sys.executable, "-m", "l1sysid.cli", "bounds", "--config", str(cfg_path),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "q" in json.loads(proc.stdout)
