"""Seeded Monte-Carlo experiments and report emission.

Each trial derives one 64-bit seed from the master seed and its index and
splits it into independent named streams, so a trial's numbers do not
depend on how many other trials run or on the worker count.
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import attack_mass_q, bound_report, markov_error_bound, uniqueness_certificate
from .config import ExperimentConfig, config_to_dict, x0_sampler
from .estimate import LADConvergenceError, LADOptions, frobenius_error, lad_fit, ls_fit
from .model import gen_general_system, gen_nilpotent_system, markov_parameters
from .realize import DegenerateOrderWarning, ho_kalman, markov_product_error, true_balanced_truncation
from .sim import AttackModel, InputModel, assemble_regression, attack_free_mask, simulate

logger = logging.getLogger(__name__)

STREAMS = ("system", "inputs", "attacks", "certificate")
MARKOV_COLUMNS = ("trial", "T", "err_l1", "err_ls", "certificate_min", "q", "bound")
REALIZATION_COLUMNS = ("trial", "d", "i", "err", "sigma_hat_d")


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(trial,)).generate_state(1, np.uint64)[0])


def trial_streams(tseed: int) -> dict:
    children = np.random.SeedSequence(tseed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


def build_system(cfg: ExperimentConfig, rng):
    if cfg.generator == "nilpotent":
        return gen_nilpotent_system(cfg.n, cfg.m, cfg.r, cfg.k, cfg.target_norm, rng, cfg.entry_dist)
    return gen_general_system(cfg.n, cfg.m, cfg.r, cfg.target_norm, rng, cfg.entry_dist)


def attack_model(cfg: ExperimentConfig) -> AttackModel:
    return AttackModel(p=cfg.p_value, strategy=cfg.attack, mean=cfg.attack_mean,
                       mean_low=cfg.mean_low, mean_high=cfg.mean_high, cov_scale=cfg.cov_scale,
                       sign_rule=cfg.sign_rule, eta=cfg.eta_value)


def lad_options(cfg: ExperimentConfig) -> LADOptions:
    return LADOptions(inner_max_iter=cfg.lad_inner_max_iter, max_pivots=cfg.lad_max_pivots,
                      tol_obj=cfg.lad_tol, raise_on_failure=True)


@dataclass
class TrialSetup:
    index: int
    seed: int
    streams: dict
    system: object
    trajectory: object
    data: object
    mask: np.ndarray
    G_true: object


def setup_trial(cfg: ExperimentConfig, index: int, T_max: int | None = None) -> TrialSetup:
    """Generate the system and simulate enough steps for ``T_max`` regression samples."""
    tseed = trial_seed(cfg.seed, index)
    streams = trial_streams(tseed)
    sys = build_system(cfg, streams["system"])
    T_max = cfg.horizon if T_max is None else T_max
    L = T_max + 2 * cfg.k - 1
    traj = simulate(sys, InputModel(cfg.gamma, cfg.m), attack_model(cfg), L, x0_sampler(cfg),
                    streams["inputs"], streams["attacks"])
    data = assemble_regression(traj, cfg.k)
    mask = attack_free_mask(sys, traj, cfg.k)
    return TrialSetup(index, tseed, streams, sys, traj, data, mask, markov_parameters(sys, cfg.k))


def _fit_lad(data, opts, notes: list, T: int):
    try:
        return lad_fit(data, opts)
    except LADConvergenceError as exc:
        notes.append(f"T={T}: {exc}")
        return exc.result


def plateau_checkpoint(Ts, errs, rel: float = 0.01, floor: float = 1e-10) -> int:
    """First checkpoint whose error moved less than ``rel`` from the previous one."""
    for j in range(1, len(Ts)):
        prev, cur = errs[j - 1], errs[j]
        if cur <= floor and prev <= floor:
            return Ts[j]
        if prev > 0 and abs(cur - prev) <= rel * prev:
            return Ts[j]
    return Ts[-1]


def _markov_rows(cfg: ExperimentConfig, setup: TrialSetup, checkpoints, notes):
    opts = lad_options(cfg)
    q = attack_mass_q(cfg.p_value, cfg.k)
    try:
        bound = markov_error_bound(setup.system, cfg.k, q, cfg.eta_value, cfg.gamma, cfg.c)
    except ValueError:
        bound = math.nan
    rows, fits = [], {}
    for T in checkpoints:
        sub = setup.data.head(T)
        l1 = _fit_lad(sub, opts, notes, T)
        ls = ls_fit(sub)
        cert = uniqueness_certificate(sub, setup.mask[:, :T], cfg.n_directions, setup.streams["certificate"])
        rows.append({
            "trial": setup.index, "T": T,
            "err_l1": frobenius_error(setup.G_true, l1.G_hat),
            "err_ls": frobenius_error(setup.G_true, ls.G_hat),
            "certificate_min": float(cert.min()),
            "q": q, "bound": bound,
        })
        fits[T] = (l1, cert)
    return rows, fits


def markov_trial(cfg: ExperimentConfig, index: int) -> dict:
    out = {"trial": index, "seed": trial_seed(cfg.seed, index), "rows": [], "notes": []}
    try:
        setup = setup_trial(cfg, index)
        rows, fits = _markov_rows(cfg, setup, cfg.checkpoint_list(), out["notes"])
        l1, cert = fits[rows[-1]["T"]]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateOrderWarning)
            sigma_k = float(ho_kalman(l1.markov(cfg.k), cfg.k).sigma[-1])
        out["rows"] = rows
        out["certificate_rows"] = cert.tolist()
        out["lad_diagnostics"] = _slim(l1.diagnostics)
        out["bounds"] = bound_report(setup.system, cfg.k, cfg.p_value, cfg.eta_value, cfg.gamma,
                                     cfg.delta, cfg.c, sigma_k).to_dict()
        out["attack_rate"] = float(setup.trajectory.xi.mean())
    except Exception as exc:  # recorded, not fatal
        logger.warning("trial %d failed: %s", index, exc)
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def realization_trial(cfg: ExperimentConfig, index: int) -> dict:
    out = {"trial": index, "seed": trial_seed(cfg.seed, index), "rows": [], "notes": [], "degenerate": []}
    try:
        if cfg.realize_T is None:
            setup = setup_trial(cfg, index)
            mrows, fits = _markov_rows(cfg, setup, cfg.checkpoint_list(), out["notes"])
            T_sel = plateau_checkpoint([r["T"] for r in mrows], [r["err_l1"] for r in mrows])
        else:
            T_sel = cfg.realize_T
            setup = setup_trial(cfg, index, T_sel)
            mrows, fits = _markov_rows(cfg, setup, [T_sel], out["notes"])
        out["markov_rows"] = [r for r in mrows if r["T"] == T_sel]
        out["T_used"] = T_sel
        G_hat = fits[T_sel][0].markov(cfg.k)
        rows = []
        for d in cfg.d_list:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", DegenerateOrderWarning)
                beta = d if cfg.realize_hankel == "d" else cfg.k
                est = ho_kalman(G_hat, d, hankel_blocks=beta)
                ref = true_balanced_truncation(setup.system, d, cfg.tail_tol)
            if any(issubclass(w.category, DegenerateOrderWarning) for w in caught):
                out["degenerate"].append(d)
            for i in cfg.i_list:
                rows.append({"trial": index, "d": d, "i": i,
                             "err": markov_product_error(ref, est, i),
                             "sigma_hat_d": float(est.sigma[-1])})
        out["rows"] = rows
    except Exception as exc:  # recorded, not fatal
        logger.warning("trial %d failed: %s", index, exc)
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def _slim(diag: dict) -> dict:
    return {
        "converged": diag["converged"],
        "gap": diag["gap"],
        "iterations": diag["iterations"],
        "rows": [{k: row[k] for k in ("pivots", "gap", "zero_residuals", "maybe_nonunique")}
                 for row in diag["rows"]],
    }


_TRIAL_FUNCS = {"markov": markov_trial, "realization": realization_trial}


def _run_trial(args):
    kind, cfg, index = args
    return _TRIAL_FUNCS[kind](cfg, index)


@dataclass
class Report:
    kind: str
    config: ExperimentConfig
    columns: tuple
    rows: list
    trials: list = field(default_factory=list)
    wall_clock: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_csv_value(row[c]) for c in self.columns) + "\n")
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "config": config_to_dict(self.config),
            "trial_seeds": [t["seed"] for t in self.trials],
            "failed_trials": [{"trial": t["trial"], "error": t["error"]} for t in self.trials if "error" in t],
            "trials": [{k: v for k, v in t.items() if k != "rows"} for t in self.trials],
        }
        return json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> dict:
        os.makedirs(out_dir, exist_ok=True)
        paths = {name: os.path.join(out_dir, name) for name in ("report.csv", "report.json", "plot.gp")}
        with open(paths["report.csv"], "w") as fh:
            fh.write(self.to_csv())
        with open(paths["report.json"], "w") as fh:
            fh.write(self.to_json())
        with open(paths["plot.gp"], "w") as fh:
            fh.write(emit_plot_script(self, self.kind))
        # wall-clock is kept apart so the report files stay byte-reproducible
        with open(os.path.join(out_dir, "timing.json"), "w") as fh:
            json.dump({"wall_clock_seconds": self.wall_clock}, fh)
        return paths

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)


def _csv_value(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(float(obj)) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_experiment(cfg: ExperimentConfig, kind: str) -> Report:
    if kind not in _TRIAL_FUNCS:
        raise ValueError(f"unknown experiment kind {kind!r}")
    start = time.perf_counter()
    tasks = [(kind, cfg, i) for i in range(cfg.trials)]
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            trials = list(pool.map(_run_trial, tasks))
    else:
        trials = [_run_trial(t) for t in tasks]
    rows = [row for t in trials for row in t["rows"]]
    columns = MARKOV_COLUMNS if kind == "markov" else REALIZATION_COLUMNS
    return Report(kind, cfg, columns, rows, trials, time.perf_counter() - start)


def run_markov_experiment(cfg: ExperimentConfig) -> Report:
    return run_experiment(cfg, "markov")


def run_realization_experiment(cfg: ExperimentConfig) -> Report:
    return run_experiment(cfg, "realization")


def emit_plot_script(report: Report, kind: str | None = None, csv_name: str = "report.csv") -> str:
    """Gnuplot script drawing the report's errors on a log scale."""
    kind = kind or report.kind
    if not report.rows:
        raise ValueError("cannot plot an empty report")
    if kind != report.kind:
        raise ValueError(f"report is of kind {report.kind!r}, not {kind!r}")
    head = [
        "set datafile separator ','",
        "set datafile columnheaders",
        "set logscale y",
        "set format y '10^{%L}'",
        "set key top right",
        "set terminal pngcairo size 900,600",
    ]
    if kind == "markov":
        head += [
            "set output 'markov_error.png'",
            "set xlabel 'T (regression samples)'",
            "set ylabel 'Frobenius error of the Markov matrix'",
            f"plot '{csv_name}' using (column(\"T\")):(column(\"err_l1\")) with points pt 7 title 'err_l1', \\",
            f"     '{csv_name}' using (column(\"T\")):(column(\"err_ls\")) with points pt 5 title 'err_ls'",
        ]
    else:
        i_values = sorted({int(row["i"]) for row in report.rows})
        curves = [f"'{csv_name}' using (column(\"d\")):(column(\"i\") == {i} ? column(\"err\") : 1/0)"
                  f" with linespoints title 'i={i}'" for i in i_values]
        head += [
            "set output 'realization_error.png'",
            "set xlabel 'model order d'",
            "set ylabel 'Markov-product error'",
            "plot " + ", \\\n     ".join(curves),
        ]
    return "\n".join(head) + "\n"
