"""Command-line front end.

Subcommands: fit, riskratio, power, simulate, calibrate-priors.  All
outputs are plot-ready CSV files; every run writes a manifest capturing
the effective configuration and seed.  Options may come from a flat
``key = value`` config file (--config); explicit flags override it.

Exit codes: 0 success, 2 usage/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import __version__
from .data import (
    CovariatePolicy,
    DataError,
    MissingRule,
    fmt_float,
    load_dataset,
)
from .likelihood import FitError, PriorSpec
from .mediation import risk_ratio_curves, time_grid, write_curves_csv
from .model_space import RESPONSE_LABELS, SURVIVAL_LABELS
from .prediction import PredictionRequest, TestFrame, predictive_power
from .priors import calibrate_psi, model_prior_probs
from .sampler import (
    PARAM_NAMES,
    SamplerConfig,
    load_draws,
    run_mcmc,
    save_draws,
    summarize_posterior,
)
from .simulation import (
    aic_weights_for,
    calibrated_priors,
    get_scenario,
    run_replication_study,
    write_report,
)


class UsageError(Exception):
    pass


def _read_config(path) -> list[str]:
    """Flat key = value lines, turned into long-option argv entries."""
    argv = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            argv.extend([f"--{key.replace('_', '-')}", value])
    return argv


def _write_manifest(out_dir, args: argparse.Namespace) -> None:
    os.makedirs(out_dir, exist_ok=True)
    skip = {"func"}
    with open(os.path.join(out_dir, "manifest"), "w", encoding="utf-8") as fh:
        fh.write(f"artifact_version = {__version__}\n")
        for key in sorted(vars(args)):
            if key in skip:
                continue
            fh.write(f"{key} = {getattr(args, key)}\n")


def _policy(args) -> CovariatePolicy:
    rule = MissingRule.GROUP_MEAN_IMPUTE if args.impute_missing else MissingRule.REJECT
    return CovariatePolicy(missing_rule=rule)


def _load_test_frame(path) -> TestFrame:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["arm", "covariate"] or header not in (
            ["arm", "covariate"], ["arm", "covariate", "response"]
        ):
            raise DataError(
                f"{path}: header must be arm,covariate[,response], got {header}"
            )
        rows = [r for r in reader if r and any(s.strip() for s in r)]
    if not rows:
        raise DataError(f"{path}: no data rows")
    arm = np.array([float(r[0]) for r in rows])
    cov = np.array([float(r[1]) for r in rows])
    resp = None
    if len(header) == 3:
        resp = np.array([float(r[2]) for r in rows])
    return TestFrame(arm=arm, covariate=cov, response=resp)


def _sampler_config(args) -> SamplerConfig:
    return SamplerConfig(
        chains=args.chains, iterations=args.iterations, burn_in=args.burn_in,
        thin=args.thin, seed=args.seed,
    )


def _write_prior_table(path, table, weights) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "prior", "target_weight"])
        for label, p, wt in zip(table.labels, table.probabilities, weights):
            w.writerow([label, fmt_float(p), fmt_float(wt)])


def cmd_fit(args) -> int:
    dataset = load_dataset(args.data, _policy(args))
    out = args.out
    os.makedirs(out, exist_ok=True)
    if args.equal_priors:
        # psi = 0.5 gives exactly equal prior mass over each family
        prior = PriorSpec()
        rw = np.ones(len(RESPONSE_LABELS))
        sw = np.ones(len(SURVIVAL_LABELS))
    else:
        rw, sw = aic_weights_for(dataset)
        prior = calibrated_priors(dataset, seed=args.seed,
                                  anneal_evals=args.anneal_evals)
    _write_prior_table(os.path.join(out, "prior_response.csv"),
                       model_prior_probs(prior.psi_z, "response"), rw)
    _write_prior_table(os.path.join(out, "prior_survival.csv"),
                       model_prior_probs(prior.psi_w, "survival"), sw)
    draws = run_mcmc(dataset, prior, _sampler_config(args))
    save_draws(draws, os.path.join(out, "draws.csv"))
    summary = summarize_posterior(draws)
    with open(os.path.join(out, "coef_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "mean", "sd", "hpd_lower", "hpd_upper", "rhat"])
        for j, name in enumerate(PARAM_NAMES):
            w.writerow([name, fmt_float(summary.mean[j]), fmt_float(summary.sd[j]),
                        fmt_float(summary.hpd_lower[j]),
                        fmt_float(summary.hpd_upper[j]),
                        fmt_float(summary.rhat[j])])
    with open(os.path.join(out, "model_probs.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "model", "posterior_probability"])
        for lab, p in zip(RESPONSE_LABELS, summary.response_probs):
            w.writerow(["response", lab, fmt_float(p)])
        for lab, p in zip(SURVIVAL_LABELS, summary.survival_probs):
            w.writerow(["survival", lab, fmt_float(p)])
    _write_manifest(out, args)
    return 0


def _parse_grid(args) -> np.ndarray:
    if args.grid:
        try:
            start, stop, count = args.grid.split(":")
            grid = np.linspace(float(start), float(stop), int(count))
        except ValueError:
            raise UsageError(f"bad grid spec {args.grid!r}; expected start:stop:count")
        if np.any(grid <= 0):
            raise UsageError("grid times must be positive")
        return grid
    return time_grid(args.landmark)


def cmd_riskratio(args) -> int:
    dataset = load_dataset(args.data, _policy(args))
    draws = load_draws(args.draws)
    grid = _parse_grid(args)
    curves = risk_ratio_curves(dataset, draws, grid)
    os.makedirs(args.out, exist_ok=True)
    write_curves_csv(curves, os.path.join(args.out, "lrr_curves.csv"),
                     names=("lrr_tot", "lrr_d", "lrr_m"))
    write_curves_csv(curves, os.path.join(args.out, "medprop.csv"),
                     names=("med_pct",))
    _write_manifest(args.out, args)
    return 0


def cmd_power(args) -> int:
    draws = load_draws(args.draws)
    frame = _load_test_frame(args.test_frame)
    interim = None
    if args.mode == "interim_completion":
        if not args.interim_data:
            raise UsageError("--interim-data is required for interim_completion mode")
        interim = load_dataset(args.interim_data, _policy(args))
    request = PredictionRequest(mode=args.mode, test_frame=frame,
                                landmark=args.landmark, alpha=args.alpha)
    result = predictive_power(draws, request, observed_interim=interim,
                              seed=args.seed, max_draws=args.max_draws)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "power.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "alpha", "landmark", "draws_used", "power"])
        w.writerow([args.mode, fmt_float(args.alpha), fmt_float(args.landmark),
                    result.draws_used, fmt_float(result.power)])
    with open(os.path.join(args.out, "pvalues.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["draw", "pvalue"])
        for i, p in enumerate(result.pvalues):
            w.writerow([i, fmt_float(p)])
    _write_manifest(args.out, args)
    return 0


def cmd_simulate(args) -> int:
    scenario = get_scenario(args.scenario)
    report = run_replication_study(
        scenario, args.n, args.reps, _sampler_config(args),
        seed=args.seed, workers=args.threads, calib_evals=args.anneal_evals,
    )
    write_report(report, args.out)
    _write_manifest(args.out, args)
    return 0


def cmd_calibrate_priors(args) -> int:
    families = ["response", "survival"] if args.family == "both" else [args.family]
    os.makedirs(args.out, exist_ok=True)
    if args.data:
        dataset = load_dataset(args.data, _policy(args))
        rw, sw = aic_weights_for(dataset)
        weights = {"response": rw, "survival": sw}
    else:
        weights = {
            "response": np.ones(len(RESPONSE_LABELS)),
            "survival": np.ones(len(SURVIVAL_LABELS)),
        }
    for family in families:
        result = calibrate_psi(weights[family], family, seed=args.seed,
                               anneal_evals=args.anneal_evals)
        _write_prior_table(os.path.join(args.out, f"prior_{family}.csv"),
                           result.table, weights[family])
        print(f"{family}: psi = {np.array2string(result.psi, precision=6)}, "
              f"residual = {result.residual:.3e}")
    _write_manifest(args.out, args)
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master RNG seed")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--impute-missing", action="store_true",
                   help="impute missing covariates by (arm, response) cell mean")
    p.add_argument("--anneal-evals", type=int, default=100_000,
                   help="annealing budget for prior calibration")


def _add_sampler(p: argparse.ArgumentParser) -> None:
    p.add_argument("--chains", type=int, default=2)
    p.add_argument("--iterations", type=int, default=10_000)
    p.add_argument("--burn-in", type=int, default=5_000)
    p.add_argument("--thin", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medbma",
        description="Bayesian model-averaged mediation analysis for "
                    "response and survival outcomes",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="calibrate priors, sample the posterior, "
                                   "and summarize")
    p.add_argument("data", help="subject-level CSV (arm,covariate,response,time,event)")
    p.add_argument("--equal-priors", action="store_true",
                   help="equal model priors instead of reverse-AIC-rank weights")
    _add_common(p)
    _add_sampler(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("riskratio", help="effect curves from saved draws")
    p.add_argument("--draws", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--grid", help="time grid as start:stop:count")
    p.add_argument("--landmark", type=float, default=1.2,
                   help="landmark for the default grid when --grid is absent")
    _add_common(p)
    p.set_defaults(func=cmd_riskratio)

    p = sub.add_parser("power", help="posterior-predictive power")
    p.add_argument("--draws", required=True)
    p.add_argument("--test-frame", required=True,
                   help="CSV of arm,covariate[,response] for subjects to predict")
    p.add_argument("--mode", choices=("future_study", "interim_completion"),
                   default="future_study")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--landmark", type=float, required=True)
    p.add_argument("--interim-data", help="observed interim CSV "
                                          "(interim_completion mode)")
    p.add_argument("--max-draws", type=int, default=None,
                   help="cap on posterior draws used (evenly spaced subsample)")
    _add_common(p)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("simulate", help="replication study for a scenario")
    p.add_argument("--scenario", required=True, help="I, II, III or IV")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--reps", type=int, default=20)
    _add_common(p)
    _add_sampler(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate-priors", help="search psi for target model "
                                                "prior probabilities")
    p.add_argument("--family", choices=("response", "survival", "both"),
                   default="both")
    p.add_argument("--data", help="CSV used for reverse-AIC-rank weights; "
                                  "equal weights when absent")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate_priors)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # pull --config out first; its contents become low-precedence options
    if "--config" in argv:
        i = argv.index("--config")
        try:
            config_path = argv[i + 1]
        except IndexError:
            print("error: --config requires a path", file=sys.stderr)
            return 2
        head, tail = argv[:i], argv[i + 2:]
        try:
            config_args = _read_config(config_path)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        except UsageError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        # config options go right after the subcommand so explicit flags,
        # which appear later, override them
        argv = head + tail
        sub_pos = next((k for k, a in enumerate(argv) if not a.startswith("-")), None)
        if sub_pos is None:
            argv = argv + config_args
        else:
            argv = argv[: sub_pos + 1] + config_args + argv[sub_pos + 1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DataError, UsageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FitError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
