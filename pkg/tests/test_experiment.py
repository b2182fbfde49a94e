import json

import numpy as np
import pytest

from l1sysid.config import parse_config
from l1sysid.experiment import (
    MARKOV_COLUMNS,
    REALIZATION_COLUMNS,
    Report,
    emit_plot_script,
    plateau_checkpoint,
    run_markov_experiment,
    run_realization_experiment,
    trial_seed,
)

SMALL = """seed = 11
n = 10
k = 2
horizon = 200
trials = 2
n_directions = 20
"""


@pytest.fixture(scope="module")
def markov_report():
    return run_markov_experiment(parse_config(SMALL))


@pytest.fixture(scope="module")
def realization_report():
    return run_realization_experiment(parse_config(SMALL + "realize_T = 200\n"))


def test_markov_csv_layout(markov_report):
    lines = markov_report.to_csv().splitlines()
    assert lines[0] == ",".join(MARKOV_COLUMNS)
    assert len(lines) == 1 + 2 * 3  # checkpoints 50, 100, 200
    T = markov_report.column("T")
    assert list(T[:3]) == [50, 100, 200]


def test_markov_exact_in_nilpotent_regime(markov_report):
    final = [row for row in markov_report.rows if row["T"] == 200]
    assert all(row["err_l1"] <= 1e-8 for row in final)
    assert all(row["err_ls"] >= 1.0 for row in final)
    assert all(row["bound"] == 0.0 for row in final)


def test_noiseless_exact_at_every_checkpoint():
    cfg = parse_config(SMALL + "attack = none\n")
    report = run_markov_experiment(cfg)
    # x0 enters only through A^{2k-1} = 0, so every checkpoint is exact
    assert np.all(report.column("err_l1") <= 1e-8)
    assert np.all(report.column("err_ls") <= 1e-8)


def test_determinism_bytes(markov_report):
    again = run_markov_experiment(parse_config(SMALL))
    assert again.to_csv() == markov_report.to_csv()
    assert again.to_json() == markov_report.to_json()
    assert emit_plot_script(again) == emit_plot_script(markov_report)


def test_trial_independence(markov_report):
    more = run_markov_experiment(parse_config(SMALL.replace("trials = 2", "trials = 3")))
    rows = [r for r in more.rows if r["trial"] < 2]
    assert rows == markov_report.rows


def test_workers_do_not_change_results(markov_report):
    par = run_markov_experiment(parse_config(SMALL + "workers = 2\n"))
    assert par.to_csv() == markov_report.to_csv()


def test_trial_seeds_are_distinct():
    seeds = {trial_seed(1, t) for t in range(50)}
    assert len(seeds) == 50
    assert trial_seed(1, 0) != trial_seed(2, 0)


def test_report_json(markov_report):
    data = json.loads(markov_report.to_json())
    assert data["config"]["seed"] == 11
    assert data["failed_trials"] == []
    assert len(data["trial_seeds"]) == 2
    assert "bounds" in data["trials"][0] and "q" in data["trials"][0]["bounds"]


def test_failed_trial_is_recorded():
    cfg = parse_config(SMALL + "attack = iid_gaussian\nattack_mean = 1e13\np = 0.05\n")
    report = run_markov_experiment(cfg)
    data = json.loads(report.to_json())
    assert len(data["failed_trials"]) == 2
    assert "SimulationError" in data["failed_trials"][0]["error"]


def test_realization_layout(realization_report):
    lines = realization_report.to_csv().splitlines()
    assert lines[0] == ",".join(REALIZATION_COLUMNS)
    assert len(lines) == 1 + 2 * 2 * 4
    sig = realization_report.column("sigma_hat_d")
    assert np.all(sig > 0)


def test_realization_auto_T():
    report = run_realization_experiment(parse_config(SMALL))
    assert all(t["T_used"] in (50, 100, 200) for t in report.trials)


def test_plot_scripts(markov_report, realization_report):
    text = emit_plot_script(markov_report, "markov")
    assert "set logscale y" in text and '"err_l1"' in text and '"err_ls"' in text
    text = emit_plot_script(realization_report, "realization")
    assert sum("title 'i=" in line for line in text.splitlines()) == 4
    with pytest.raises(ValueError):
        emit_plot_script(markov_report, "realization")
    empty = Report("markov", markov_report.config, MARKOV_COLUMNS, [])
    with pytest.raises(ValueError):
        emit_plot_script(empty)


def test_plateau_rule():
    assert plateau_checkpoint([50, 100, 200, 400], [1.0, 0.5, 0.499, 0.498]) == 200
    assert plateau_checkpoint([50, 100, 200], [1.0, 0.5, 0.2]) == 200
    assert plateau_checkpoint([50, 100, 200], [1.0, 1e-14, 1e-15]) == 200


def test_write_outputs(tmp_path, markov_report):
    paths = markov_report.write(tmp_path)
    for name in ("report.csv", "report.json", "plot.gp", "timing.json"):
        assert (tmp_path / name).exists()
    assert open(paths["report.csv"]).read() == markov_report.to_csv()
    # 17 significant digits round-trip exactly
    row = open(paths["report.csv"]).read().splitlines()[1].split(",")
    assert float(row[3]) == markov_report.rows[0]["err_ls"]
