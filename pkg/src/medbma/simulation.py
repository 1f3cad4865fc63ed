"""Benchmark scenario generators and replication study harnesses.

Four data-generating mechanisms (I: indirect effect only, II: direct
only, III: both, IV: neither) share a Weibull(nu=2, lam=1) baseline,
Uniform(-2, 4) covariate, balanced 1:1 allocation and administrative
censoring at the landmark c = 1.2.  Replications are seeded as
(master seed, replication index) so results are independent of
execution order.
"""

from __future__ import annotations

import csv
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from .data import Dataset, fmt_float
from .likelihood import (
    FitError,
    PriorSpec,
    fit_response_mle,
    fit_survival_mle,
)
from .mediation import risk_ratio_curves, time_grid, true_curves
from .model_space import (
    RESPONSE_LABELS,
    RESPONSE_TABLE,
    SURVIVAL_LABELS,
    SURVIVAL_TABLE,
)
from .prediction import (
    PredictionRequest,
    TestFrame,
    logrank_test,
    predictive_power,
)
from .priors import aic_rank_weights, calibrate_psi
from .sampler import (
    PARAM_NAMES,
    SamplerConfig,
    run_mcmc,
    summarize_posterior,
)


@dataclass(frozen=True)
class Scenario:
    label: str
    beta: tuple[float, float, float, float]
    gamma: tuple[float, float, float, float, float, float]
    nu: float = 2.0
    lam: float = 1.0
    landmark: float = 1.2
    response_model: str = "R5"
    survival_model: str = "S7"

    def truth_vector(self) -> np.ndarray:
        return np.array([*self.beta, *self.gamma, self.nu, self.lam])


SCENARIOS: dict[str, Scenario] = {
    "I": Scenario("I", beta=(1, 2, -1, 2), gamma=(0, -0.84, 1, 0, 0, 0),
                  response_model="R5", survival_model="S7"),
    "II": Scenario("II", beta=(1, 0, -1, 0), gamma=(-0.4, 0, 1, 0, 0, 0),
                   response_model="R3", survival_model="S6"),
    "III": Scenario("III", beta=(1, 2, -1, 2), gamma=(-0.65, -0.6, 1, 0, 0, 0),
                    response_model="R5", survival_model="S11"),
    "IV": Scenario("IV", beta=(1, 2, -1, 2), gamma=(0, 0, 1, 0, 0, 0),
                   response_model="R5", survival_model="S4"),
}


def get_scenario(label: str) -> Scenario:
    try:
        return SCENARIOS[label.upper()]
    except KeyError:
        raise ValueError(f"unknown scenario {label!r}; expected I, II, III or IV")


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


def _draw_population(beta, n: int, rng: np.random.Generator):
    """Balanced arms, Uniform(-2,4) covariate, logistic response."""
    if n % 2:
        raise ValueError("n must be even for balanced 1:1 allocation")
    arm = np.repeat([0.0, 1.0], n // 2)
    arm = arm[rng.permutation(n)]
    x = rng.uniform(-2.0, 4.0, n)
    beta = np.asarray(beta, dtype=float)
    eta = beta[0] + beta[1] * arm + beta[2] * x + beta[3] * arm * x
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return arm, x, y


def _generate_population(beta, n: int, seed):
    return _draw_population(beta, n, _rng(seed))


def generate_dataset(scenario: Scenario, n: int, seed) -> Dataset:
    """Full scenario draw with administrative censoring at the landmark;
    a time hitting the landmark exactly is censored."""
    rng = _rng(seed)
    arm, x, y = _draw_population(scenario.beta, n, rng)
    gamma = np.asarray(scenario.gamma, dtype=float)
    eta = (gamma[0] * arm + gamma[1] * y + gamma[2] * x + gamma[3] * arm * y
           + gamma[4] * arm * x + gamma[5] * x * y)
    u = rng.random(n)
    t_star = np.power(-np.log(u) / (scenario.lam * np.exp(eta)), 1.0 / scenario.nu)
    c = scenario.landmark
    return Dataset(
        arm=arm, covariate=x, response=y,
        time=np.minimum(t_star, c),
        event=(t_star < c).astype(float),
    )


def true_hazard_ratio(scenario: Scenario) -> float:
    """Control-vs-treatment hazard ratio implied by the true coefficients.

    Plugs the per-arm mean response rate (quadrature over the Uniform(-2,4)
    covariate law) and the covariate mean into the PH linear predictor and
    exponentiates the arm difference.
    """
    beta = np.asarray(scenario.beta, dtype=float)
    gamma = np.asarray(scenario.gamma, dtype=float)

    def mean_response(a: float) -> float:
        def integrand(x):
            eta = beta[0] + beta[1] * a + beta[2] * x + beta[3] * a * x
            return 1.0 / (1.0 + np.exp(-eta))
        val, _ = integrate.quad(integrand, -2.0, 4.0, limit=200)
        return val / 6.0

    x_bar = 1.0  # mean of Uniform(-2, 4)
    eta_arm = []
    for a in (0.0, 1.0):
        p_bar = mean_response(a)
        eta_arm.append(gamma[0] * a + gamma[1] * p_bar + gamma[2] * x_bar
                       + gamma[3] * a * p_bar + gamma[4] * a * x_bar
                       + gamma[5] * x_bar * p_bar)
    return float(np.exp(eta_arm[0] - eta_arm[1]))


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def aic_weights_for(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-AIC-rank weights for both families from per-model MLE fits."""
    r_aics = []
    for z in RESPONSE_TABLE:
        try:
            r_aics.append(fit_response_mle(dataset, z)[3])
        except FitError:
            r_aics.append(np.inf)
    s_aics = []
    for w in SURVIVAL_TABLE:
        try:
            s_aics.append(fit_survival_mle(dataset, w)[5])
        except FitError:
            s_aics.append(np.inf)
    worst_r = max(a for a in r_aics if np.isfinite(a))
    worst_s = max(a for a in s_aics if np.isfinite(a))
    r_aics = [a if np.isfinite(a) else worst_r + 1.0 for a in r_aics]
    s_aics = [a if np.isfinite(a) else worst_s + 1.0 for a in s_aics]
    return aic_rank_weights(r_aics), aic_rank_weights(s_aics)


def calibrated_priors(dataset: Dataset, seed: int = 0,
                      anneal_evals: int = 5_000,
                      equal_weights: bool = False) -> PriorSpec:
    """PriorSpec with psi calibrated to reverse-AIC-rank (or equal) weights."""
    if equal_weights:
        wz = np.ones(len(RESPONSE_TABLE))
        ww = np.ones(len(SURVIVAL_TABLE))
    else:
        wz, ww = aic_weights_for(dataset)
    cz = calibrate_psi(wz, "response", seed=seed, anneal_evals=anneal_evals)
    cw = calibrate_psi(ww, "survival", seed=seed + 1, anneal_evals=anneal_evals)
    return PriorSpec(psi_z=cz.psi, psi_w=cw.psi)


@dataclass
class ReplicationReport:
    scenario: str
    n: int
    reps: int
    param_names: tuple[str, ...]
    truth: np.ndarray
    bias: np.ndarray
    mstd: np.ndarray
    cp: np.ndarray
    response_probs: np.ndarray   # (5, 3) mean / min / max
    survival_probs: np.ndarray   # (18, 3)
    times: np.ndarray
    lrr_est: dict[str, dict[str, np.ndarray]]   # per curve: mean, q2.5, q97.5
    lrr_truth: dict[str, np.ndarray]
    med_median: np.ndarray
    med_q: tuple[np.ndarray, np.ndarray]
    med_truth: np.ndarray
    failures: int
    runtime_s: float


def _one_replication(args):
    scenario, n, rep, seed, sampler_config, grid, calib_evals = args
    data = generate_dataset(scenario, n, (seed, rep))
    prior = calibrated_priors(data, seed=_derived_seed(seed, rep, 1),
                              anneal_evals=calib_evals)
    config = replace(sampler_config, seed=_derived_seed(seed, rep, 2))
    draws = run_mcmc(data, prior, config)
    summary = summarize_posterior(draws)
    curves = risk_ratio_curves(data, draws, grid)
    cs = curves.summary()
    return {
        "mean": summary.mean,
        "sd": summary.sd,
        "hpd": (summary.hpd_lower, summary.hpd_upper),
        "rprobs": summary.response_probs,
        "sprobs": summary.survival_probs,
        "lrr_mean": {k: cs[k]["mean"] for k in ("lrr_tot", "lrr_d", "lrr_m")},
        "med_median": cs["med_pct"]["median"],
    }


def run_replication_study(
    scenario: Scenario,
    n: int,
    reps: int,
    sampler_config: SamplerConfig,
    grid=None,
    seed: int = 0,
    workers: int = 1,
    calib_evals: int = 5_000,
) -> ReplicationReport:
    """Generate / fit / summarize ``reps`` times and aggregate bias, mean
    posterior sd, HPD coverage, model probabilities and effect curves."""
    if reps < 2:
        raise ValueError("reps must be >= 2")
    if grid is None:
        grid = time_grid(scenario.landmark)
    grid = np.asarray(grid, dtype=float)
    t0 = _time.monotonic()
    jobs = [(scenario, n, r, seed, sampler_config, grid, calib_evals)
            for r in range(reps)]
    results: list[dict | None] = [None] * reps
    failures = 0
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for r, res in enumerate(pool.map(_one_replication, jobs)):
                results[r] = res
    else:
        for r, job in enumerate(jobs):
            try:
                results[r] = _one_replication(job)
            except (FitError, ValueError):
                failures += 1
    ok = [res for res in results if res is not None]
    if not ok:
        raise FitError("all replications failed")
    truth = scenario.truth_vector()
    means = np.stack([r["mean"] for r in ok])
    sds = np.stack([r["sd"] for r in ok])
    lo = np.stack([r["hpd"][0] for r in ok])
    hi = np.stack([r["hpd"][1] for r in ok])
    cp = ((lo <= truth) & (truth <= hi)).mean(axis=0)
    rprobs = np.stack([r["rprobs"] for r in ok])
    sprobs = np.stack([r["sprobs"] for r in ok])
    lrr_est = {}
    for k in ("lrr_tot", "lrr_d", "lrr_m"):
        reps_mat = np.stack([r["lrr_mean"][k] for r in ok])
        lrr_est[k] = {
            "mean": reps_mat.mean(axis=0),
            "q2.5": np.quantile(reps_mat, 0.025, axis=0),
            "q97.5": np.quantile(reps_mat, 0.975, axis=0),
        }
    med_mat = np.stack([r["med_median"] for r in ok])
    med_median = np.nanmedian(med_mat, axis=0)
    med_q = (np.nanquantile(med_mat, 0.025, axis=0),
             np.nanquantile(med_mat, 0.975, axis=0))

    tc = true_curves(scenario.beta, scenario.gamma, scenario.nu, scenario.lam,
                     grid, seed=_derived_seed(seed, 0xFACADE))
    lrr_truth = {
        "lrr_tot": tc.lrr_tot[0],
        "lrr_d": tc.lrr_d[0],
        "lrr_m": tc.lrr_m[0],
    }
    med_truth = np.ma.filled(tc.med_pct(), np.nan)[0]
    return ReplicationReport(
        scenario=scenario.label, n=n, reps=reps, param_names=PARAM_NAMES,
        truth=truth, bias=means.mean(axis=0) - truth, mstd=sds.mean(axis=0),
        cp=cp,
        response_probs=np.column_stack(
            [rprobs.mean(axis=0), rprobs.min(axis=0), rprobs.max(axis=0)]),
        survival_probs=np.column_stack(
            [sprobs.mean(axis=0), sprobs.min(axis=0), sprobs.max(axis=0)]),
        times=grid, lrr_est=lrr_est, lrr_truth=lrr_truth,
        med_median=med_median, med_q=med_q, med_truth=med_truth,
        failures=failures, runtime_s=_time.monotonic() - t0,
    )


def write_report(report: ReplicationReport, out_dir) -> None:
    import os

    os.makedirs(out_dir, exist_ok=True)

    def path(name):
        return os.path.join(out_dir, name)

    with open(path("coef_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "truth", "bias", "mstd", "cp"])
        for j, name in enumerate(report.param_names):
            w.writerow([name, fmt_float(report.truth[j]), fmt_float(report.bias[j]),
                        fmt_float(report.mstd[j]), fmt_float(report.cp[j])])
    with open(path("model_probs.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "model", "mean", "min", "max"])
        for i, lab in enumerate(RESPONSE_LABELS):
            w.writerow(["response", lab,
                        *(fmt_float(v) for v in report.response_probs[i])])
        for i, lab in enumerate(SURVIVAL_LABELS):
            w.writerow(["survival", lab,
                        *(fmt_float(v) for v in report.survival_probs[i])])
    with open(path("lrr_curves.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "curve", "est_mean", "est_q2.5", "est_q97.5", "truth"])
        for name in ("lrr_tot", "lrr_d", "lrr_m"):
            est = report.lrr_est[name]
            for k, t in enumerate(report.times):
                w.writerow([fmt_float(t), name, fmt_float(est["mean"][k]),
                            fmt_float(est["q2.5"][k]), fmt_float(est["q97.5"][k]),
                            fmt_float(report.lrr_truth[name][k])])
    with open(path("medprop_curves.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "est_median", "est_q2.5", "est_q97.5", "truth"])
        for k, t in enumerate(report.times):
            w.writerow([fmt_float(t), fmt_float(report.med_median[k]),
                        fmt_float(report.med_q[0][k]), fmt_float(report.med_q[1][k]),
                        fmt_float(report.med_truth[k])])


@dataclass
class PowerStudyResult:
    scenario: str
    n_train: int
    rows: list[dict]  # n2, mode, rep, power, realized_pvalue
    alpha: float

    def mean_power(self, n2: int, mode: str) -> float:
        vals = [r["power"] for r in self.rows if r["n2"] == n2 and r["mode"] == mode]
        return float(np.mean(vals))

    def pairs(self, n2: int, mode: str) -> tuple[np.ndarray, np.ndarray]:
        sel = [r for r in self.rows if r["n2"] == n2 and r["mode"] == mode]
        return (np.array([r["power"] for r in sel]),
                np.array([r["realized_pvalue"] for r in sel]))


def _one_power_rep(args):
    (scenario, n_train, n2_list, modes, rep, seed, sampler_config,
     calib_evals, max_power_draws, alpha) = args
    train = generate_dataset(scenario, n_train, (seed, rep, 0))
    prior = calibrated_priors(train, seed=_derived_seed(seed, rep, 1),
                              anneal_evals=calib_evals)
    config = replace(sampler_config, seed=_derived_seed(seed, rep, 2))
    draws = run_mcmc(train, prior, config)
    rows = []
    for n2 in n2_list:
        new_data = generate_dataset(scenario, n2, (seed, rep, 3, n2))
        frame = TestFrame(arm=new_data.arm, covariate=new_data.covariate)
        for mode in modes:
            request = PredictionRequest(mode=mode, test_frame=frame,
                                        landmark=scenario.landmark, alpha=alpha)
            result = predictive_power(
                draws, request,
                observed_interim=train if mode == "interim_completion" else None,
                seed=_derived_seed(seed, rep, 4, n2),
                max_draws=max_power_draws,
            )
            if mode == "interim_completion":
                times = np.concatenate([train.time, new_data.time])
                events = np.concatenate([train.event, new_data.event])
                arms = np.concatenate([train.arm, new_data.arm])
            else:
                times, events, arms = new_data.time, new_data.event, new_data.arm
            _, realized_p = logrank_test(times, events, arms)
            rows.append({"n2": n2, "mode": mode, "rep": rep,
                         "power": result.power, "realized_pvalue": realized_p})
    return rows


def run_power_study(
    scenario: Scenario,
    n_train: int,
    n2_list,
    reps: int,
    modes=("future_study", "interim_completion"),
    sampler_config: SamplerConfig | None = None,
    seed: int = 0,
    alpha: float = 0.05,
    workers: int = 1,
    calib_evals: int = 5_000,
    max_power_draws: int | None = 1_000,
) -> PowerStudyResult:
    """Mean predicted power per (n2, mode) plus the realized log-rank
    p-value on each independent dataset."""
    sampler_config = sampler_config or SamplerConfig()
    jobs = [(scenario, n_train, tuple(n2_list), tuple(modes), rep, seed,
             sampler_config, calib_evals, max_power_draws, alpha)
            for rep in range(reps)]
    rows: list[dict] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep_rows in pool.map(_one_power_rep, jobs):
                rows.extend(rep_rows)
    else:
        for job in jobs:
            rows.extend(_one_power_rep(job))
    return PowerStudyResult(scenario=scenario.label, n_train=n_train,
                            rows=rows, alpha=alpha)


def write_power_study(result: PowerStudyResult, out_dir) -> None:
    import os

    from .prediction import evaluate_predictions

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "power.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "n_train", "n2", "mode", "rep", "power",
                    "realized_pvalue"])
        for r in result.rows:
            w.writerow([result.scenario, result.n_train, r["n2"], r["mode"],
                        r["rep"], fmt_float(r["power"]),
                        fmt_float(r["realized_pvalue"])])
    with open(os.path.join(out_dir, "prediction_eval.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "n_train", "n2", "mode", "mean_power",
                    "spearman_rho", "auc"])
        combos = sorted({(r["n2"], r["mode"]) for r in result.rows})
        for n2, mode in combos:
            powers, pvals = result.pairs(n2, mode)
            ev = evaluate_predictions(powers, pvals, result.alpha)
            w.writerow([result.scenario, result.n_train, n2, mode,
                        fmt_float(powers.mean()), fmt_float(ev.spearman_rho),
                        fmt_float(ev.auc)])
