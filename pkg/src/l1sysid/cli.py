"""Command-line entry point.

Exit codes: 0 on success, 1 on a configuration error, 2 on a runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

from .bounds import AssumptionError, bound_report
from .config import ConfigError, config_to_dict, load_config, parse_config
from .estimate import LADConvergenceError, frobenius_error, lad_fit, ls_fit
from .experiment import (
    Report,
    jsonable,
    build_system,
    lad_options,
    run_experiment,
    setup_trial,
    trial_seed,
    trial_streams,
)
from .model import ConfigurationError
from .realize import DegenerateOrderWarning, ho_kalman, markov_product_error, true_balanced_truncation
from .sim import Trajectory, assemble_regression

logger = logging.getLogger("l1sysid")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--trials", type=int, help="number of trials (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes for trials")
    p.add_argument("--strict-assumptions", action="store_true",
                   help="turn assumption warnings into configuration errors")
    p.add_argument("--debug", action="store_true", help="verbose logging and debug columns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l1sysid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "simulate trial 0 and write system.json and trajectory.csv"),
                       ("estimate", "fit the LAD and LS estimators on trial 0"),
                       ("realize", "balanced-truncation models from the trial-0 estimate"),
                       ("bounds", "evaluate the bound order values for trial 0")):
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "estimate":
            p.add_argument("--trajectory", help="fit this trajectory CSV instead of simulating")
    p = sub.add_parser("experiment", help="run a Monte-Carlo experiment")
    p.add_argument("kind", choices=("markov", "realization"))
    _common(p)
    return parser


def resolve_config(args):
    strict = True if args.strict_assumptions else None
    if args.config:
        try:
            cfg = load_config(args.config, strict=strict)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    elif args.seed is not None:
        cfg = parse_config(f"seed = {args.seed}\n", strict=strict)
    else:
        raise ConfigError("missing mandatory key 'seed' (give --config or --seed)")
    overrides = {}
    for name in ("seed", "out", "trials", "workers"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    return cfg


def _write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(cfg, args) -> dict:
    setup = setup_trial(cfg, 0)
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "system.json"),
                {"seed": setup.seed, "system": setup.system.to_dict()})
    setup.trajectory.to_csv(os.path.join(cfg.out, "trajectory.csv"), debug=args.debug)
    return {"steps": setup.trajectory.horizon, "attacks": int(setup.trajectory.xi.sum())}


def _fit(cfg, data):
    try:
        return lad_fit(data, lad_options(cfg))
    except LADConvergenceError as exc:
        logger.warning("%s", exc)
        return exc.result


def cmd_estimate(cfg, args) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    payload = {"config": config_to_dict(cfg)}
    if getattr(args, "trajectory", None):
        data = assemble_regression(Trajectory.from_csv(args.trajectory), cfg.k)
        G_true = None
    else:
        setup = setup_trial(cfg, 0)
        data, G_true = setup.data, setup.G_true
        payload["seed"] = setup.seed
    l1, ls = _fit(cfg, data), ls_fit(data)
    payload.update({
        "T": data.T, "k": cfg.k,
        "G_l1": l1.G_hat.tolist(), "G_ls": ls.G_hat.tolist(),
        "objective_l1": l1.objective,
        "lad_converged": l1.diagnostics["converged"], "lad_gap": l1.diagnostics["gap"],
    })
    if G_true is not None:
        payload["err_l1"] = frobenius_error(G_true, l1.G_hat)
        payload["err_ls"] = frobenius_error(G_true, ls.G_hat)
    _write_json(os.path.join(cfg.out, "estimate.json"), payload)
    return {key: payload[key] for key in ("T", "err_l1", "err_ls") if key in payload}


def cmd_realize(cfg, args) -> dict:
    T = cfg.realize_T or cfg.horizon
    setup = setup_trial(cfg, 0, T)
    G_hat = _fit(cfg, setup.data).markov(cfg.k)
    models, errors = [], []
    for d in cfg.d_list:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateOrderWarning)
            est = ho_kalman(G_hat, d, hankel_blocks=d if cfg.realize_hankel == "d" else cfg.k)
            ref = true_balanced_truncation(setup.system, d, cfg.tail_tol)
        entry = est.to_dict()
        entry["degenerate"] = bool(caught)
        models.append(entry)
        errors.extend({"d": d, "i": i, "err": markov_product_error(ref, est, i)} for i in cfg.i_list)
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "realization.json"),
                {"seed": setup.seed, "T": T, "models": models, "errors": errors})
    return {"orders": list(cfg.d_list)}


def cmd_bounds(cfg, args) -> dict:
    tseed = trial_seed(cfg.seed, 0)
    system = build_system(cfg, trial_streams(tseed)["system"])
    rep = bound_report(system, cfg.k, cfg.p_value, cfg.eta_value, cfg.gamma, cfg.delta, cfg.c)
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "bounds.json"), {"seed": tseed, **rep.to_dict()})
    return {"q": rep.q, "T_star": rep.T_star, "markov_bound": rep.markov_bound}


def cmd_experiment(cfg, args) -> dict:
    report: Report = run_experiment(cfg, args.kind)
    report.write(cfg.out)
    failed = sum("error" in t for t in report.trials)
    return {"rows": len(report.rows), "failed_trials": failed, "out": cfg.out}


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "realize": cmd_realize,
            "bounds": cmd_bounds, "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.debug else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, ConfigurationError, AssumptionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = COMMANDS[args.command](cfg, args)
    except (ConfigError, ConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        if args.debug:
            raise
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(jsonable(summary), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
