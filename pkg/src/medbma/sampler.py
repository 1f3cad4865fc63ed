"""Trans-dimensional MCMC over (beta, gamma, nu, lam, z, w).

Within-model moves are per-parameter adaptive random-walk Metropolis
steps (on the log scale for nu and lam) tuned toward 0.44 acceptance by
Robbins-Monro scale updates during burn-in.  Across-model moves toggle
one indicator at a time: a birth draws the new coefficient from
Normal(0, birth_sd^2), a death sets it to exactly zero, and toggles
that would violate a hierarchy constraint are rejected outright.  The
dimension-matching transformation is the identity, so the acceptance
ratio is the posterior ratio times the proposal-density correction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, fmt_float
from .likelihood import (
    FitError,
    ParameterState,
    PriorSpec,
    _gamma_logpdf,
    _normal_logpdf,
    fit_mle,
)
from .model_space import (
    FULL_CONFIG,
    RESPONSE_LABELS,
    RESPONSE_TABLE,
    SURVIVAL_LABELS,
    SURVIVAL_TABLE,
    is_valid_response,
    is_valid_survival,
    response_design_matrix,
    survival_design_matrix,
)

PARAM_NAMES = (
    "beta0", "beta1", "beta2", "beta3",
    "gamma1", "gamma2", "gamma3", "gamma4", "gamma5", "gamma6",
    "nu", "lambda",
)

TARGET_ACCEPT = 0.44
_REFRESH_EVERY = 1024  # periodic recompute of incremental quantities


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 2
    iterations: int = 10_000
    burn_in: int = 5_000
    thin: int = 1
    seed: int = 0
    proposal_sd_init: float = 0.1
    adapt_window: int = 50
    birth_proposal_sd: float = 1.0

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not (0 <= self.burn_in < self.iterations):
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.proposal_sd_init <= 0 or self.birth_proposal_sd <= 0:
            raise ValueError("proposal scales must be positive")


@dataclass
class ChainDraws:
    """Retained post-burn-in states of one chain."""

    beta: np.ndarray        # (M, 4)
    gamma: np.ndarray       # (M, 6)
    nu: np.ndarray          # (M,)
    lam: np.ndarray         # (M,)
    response_idx: np.ndarray  # (M,) index into RESPONSE_LABELS
    survival_idx: np.ndarray  # (M,) index into SURVIVAL_LABELS
    iteration: np.ndarray   # (M,)

    @property
    def size(self) -> int:
        return self.beta.shape[0]

    def params(self) -> np.ndarray:
        """(M, 12) matrix in PARAM_NAMES order."""
        return np.column_stack(
            [self.beta, self.gamma, self.nu, self.lam]
        )


@dataclass
class PosteriorDraws:
    chains: list[ChainDraws]
    seed: int | None = None

    @property
    def size(self) -> int:
        return sum(c.size for c in self.chains)

    def params(self) -> np.ndarray:
        return np.concatenate([c.params() for c in self.chains], axis=0)

    def response_idx(self) -> np.ndarray:
        return np.concatenate([c.response_idx for c in self.chains])

    def survival_idx(self) -> np.ndarray:
        return np.concatenate([c.survival_idx for c in self.chains])

    def response_labels(self) -> list[str]:
        return [RESPONSE_LABELS[i] for i in self.response_idx()]

    def survival_labels(self) -> list[str]:
        return [SURVIVAL_LABELS[i] for i in self.survival_idx()]


_RESP_IDX = {t: i for i, t in enumerate(RESPONSE_TABLE)}
_SURV_IDX = {t: i for i, t in enumerate(SURVIVAL_TABLE)}


def _run_chain(dataset: Dataset, prior: PriorSpec, config: SamplerConfig,
               rng: np.random.Generator, init: ParameterState) -> ChainDraws:
    y = dataset.response
    t = dataset.time
    delta = dataset.event
    dr = response_design_matrix(dataset.arm, dataset.covariate)
    ds = survival_design_matrix(dataset.arm, dataset.response, dataset.covariate)
    log_t = np.log(np.where(t > 0, t, 1.0))
    d_sum = float(delta.sum())
    d_logt = float(delta @ log_t)
    d_cols = ds.T @ delta

    psi_z = prior.psi_z
    psi_w = prior.psi_w
    coef_sd = prior.coef_sd
    birth_sd = config.birth_proposal_sd
    gam_a = prior.weibull_shape_hyper
    gam_r = prior.weibull_rate_hyper

    beta = init.beta.copy()
    gamma = init.gamma.copy()
    z = np.array(init.config.response, dtype=int)
    w = np.array(init.config.survival, dtype=int)
    lognu = math.log(init.shape)
    loglam = math.log(init.rate_scale)
    nu, lam = init.shape, init.rate_scale

    def resp_ll(eta):
        return float(y @ eta - np.logaddexp(0.0, eta).sum())

    eta_r = dr @ beta
    ll_r = resp_ll(eta_r)
    eta_s = ds @ gamma
    exp_s = np.exp(eta_s)
    tnu = np.power(t, nu)
    h_sum = float(tnu @ exp_s)
    d_eta = float(delta @ eta_s)

    def surv_ll_value():
        return d_sum * (lognu + loglam) + (nu - 1.0) * d_logt + d_eta - lam * h_sum

    ll_s = surv_ll_value()
    if not (math.isfinite(ll_r) and math.isfinite(ll_s)):
        raise FitError("non-finite posterior at initialization")

    log_sd = np.full(12, math.log(config.proposal_sd_init))
    acc = np.zeros(12)
    att = np.zeros(12)
    window_count = 0

    n_keep = (config.iterations - config.burn_in + config.thin - 1) // config.thin
    out_beta = np.empty((n_keep, 4))
    out_gamma = np.empty((n_keep, 6))
    out_nu = np.empty(n_keep)
    out_lam = np.empty(n_keep)
    out_r = np.empty(n_keep, dtype=np.int64)
    out_s = np.empty(n_keep, dtype=np.int64)
    out_it = np.empty(n_keep, dtype=np.int64)

    keep = 0
    logit_z = np.log(psi_z) - np.log1p(-psi_z)
    logit_w = np.log(psi_w) - np.log1p(-psi_w)

    with np.errstate(over="ignore", under="ignore"):
        for it in range(config.iterations):
            # --- within-model coefficient moves -------------------------------
            for j in (0, 1, 2, 3):
                if j > 0 and not z[j - 1]:
                    continue
                sd = math.exp(log_sd[j])
                d = sd * rng.standard_normal()
                b_old = beta[j]
                eta_new = eta_r + d * dr[:, j]
                ll_new = resp_ll(eta_new)
                logr = (ll_new - ll_r
                        + _normal_logpdf(b_old + d, coef_sd)
                        - _normal_logpdf(b_old, coef_sd))
                att[j] += 1
                if math.log(rng.random()) < logr:
                    beta[j] = b_old + d
                    eta_r, ll_r = eta_new, ll_new
                    acc[j] += 1
            for j in range(6):
                if not w[j]:
                    continue
                p = 4 + j
                sd = math.exp(log_sd[p])
                d = sd * rng.standard_normal()
                col = ds[:, j]
                exp_new = exp_s * np.exp(d * col)
                h_new = float(tnu @ exp_new)
                dll = d * d_cols[j] - lam * (h_new - h_sum)
                logr = (dll + _normal_logpdf(gamma[j] + d, coef_sd)
                        - _normal_logpdf(gamma[j], coef_sd))
                att[p] += 1
                if math.isfinite(dll) and math.log(rng.random()) < logr:
                    gamma[j] += d
                    eta_s = eta_s + d * col
                    exp_s, h_sum = exp_new, h_new
                    d_eta += d * d_cols[j]
                    ll_s += dll
                    acc[p] += 1
            # log nu
            sd = math.exp(log_sd[10])
            d = sd * rng.standard_normal()
            lognu_new = lognu + d
            nu_new = math.exp(lognu_new)
            tnu_new = np.power(t, nu_new)
            h_new = float(tnu_new @ exp_s)
            dll = (d_sum * d + (nu_new - nu) * d_logt - lam * (h_new - h_sum))
            logr = (dll + _gamma_logpdf(nu_new, gam_a, gam_r)
                    - _gamma_logpdf(nu, gam_a, gam_r) + d)
            att[10] += 1
            if math.isfinite(dll) and math.log(rng.random()) < logr:
                lognu, nu = lognu_new, nu_new
                tnu, h_sum = tnu_new, h_new
                ll_s += dll
                acc[10] += 1
            # log lam
            sd = math.exp(log_sd[11])
            d = sd * rng.standard_normal()
            loglam_new = loglam + d
            lam_new = math.exp(loglam_new)
            dll = d_sum * d - (lam_new - lam) * h_sum
            logr = (dll + _gamma_logpdf(lam_new, gam_a, gam_r)
                    - _gamma_logpdf(lam, gam_a, gam_r) + d)
            att[11] += 1
            if math.isfinite(dll) and math.log(rng.random()) < logr:
                loglam, lam = loglam_new, lam_new
                ll_s += dll
                acc[11] += 1

            # --- indicator birth/death moves ----------------------------------
            for idx in rng.permutation(9):
                if idx < 3:
                    j = int(idx)
                    z_new = z.copy()
                    z_new[j] ^= 1
                    if not is_valid_response(z_new):
                        continue
                    col = dr[:, j + 1]
                    if z_new[j]:  # birth
                        v = birth_sd * rng.standard_normal()
                        eta_new = eta_r + v * col
                        ll_new = resp_ll(eta_new)
                        logr = (ll_new - ll_r + _normal_logpdf(v, coef_sd)
                                + logit_z[j] - _normal_logpdf(v, birth_sd))
                    else:  # death
                        v = beta[j + 1]
                        eta_new = eta_r - v * col
                        ll_new = resp_ll(eta_new)
                        logr = (ll_new - ll_r - _normal_logpdf(v, coef_sd)
                                - logit_z[j] + _normal_logpdf(v, birth_sd))
                    if math.log(rng.random()) < logr:
                        z = z_new
                        beta[j + 1] = v if z[j] else 0.0
                        eta_r, ll_r = eta_new, ll_new
                else:
                    j = int(idx) - 3
                    w_new = w.copy()
                    w_new[j] ^= 1
                    if not is_valid_survival(w_new):
                        continue
                    col = ds[:, j]
                    if w_new[j]:  # birth
                        v = birth_sd * rng.standard_normal()
                        exp_new = exp_s * np.exp(v * col)
                        h_new = float(tnu @ exp_new)
                        dll = v * d_cols[j] - lam * (h_new - h_sum)
                        logr = (dll + _normal_logpdf(v, coef_sd)
                                + logit_w[j] - _normal_logpdf(v, birth_sd))
                    else:  # death
                        v = gamma[j]
                        exp_new = exp_s * np.exp(-v * col)
                        h_new = float(tnu @ exp_new)
                        dll = -v * d_cols[j] - lam * (h_new - h_sum)
                        logr = (dll - _normal_logpdf(v, coef_sd)
                                - logit_w[j] + _normal_logpdf(v, birth_sd))
                    if math.isfinite(dll) and math.log(rng.random()) < logr:
                        w = w_new
                        if w[j]:
                            gamma[j] = v
                            eta_s = eta_s + v * col
                            d_eta += v * d_cols[j]
                        else:
                            gamma[j] = 0.0
                            eta_s = eta_s - v * col
                            d_eta -= v * d_cols[j]
                        exp_s, h_sum = exp_new, h_new
                        ll_s += dll

            # --- Robbins-Monro scale adaptation (burn-in only) ----------------
            if it < config.burn_in and (it + 1) % config.adapt_window == 0:
                window_count += 1
                step = 1.0 / math.sqrt(window_count)
                live = att > 0
                rates = np.divide(acc, att, out=np.zeros(12), where=live)
                log_sd[live] += step * (rates[live] - TARGET_ACCEPT)
                np.clip(log_sd, math.log(1e-4), math.log(50.0), out=log_sd)
                acc[:] = 0.0
                att[:] = 0.0

            # guard against float drift in the incremental quantities
            if (it + 1) % _REFRESH_EVERY == 0:
                eta_r = dr @ beta
                ll_r = resp_ll(eta_r)
                eta_s = ds @ gamma
                exp_s = np.exp(eta_s)
                h_sum = float(tnu @ exp_s)
                d_eta = float(delta @ eta_s)
                ll_s = surv_ll_value()

            if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
                out_beta[keep] = beta
                out_gamma[keep] = gamma
                out_nu[keep] = nu
                out_lam[keep] = lam
                out_r[keep] = _RESP_IDX[tuple(int(v) for v in z)]
                out_s[keep] = _SURV_IDX[tuple(int(v) for v in w)]
                out_it[keep] = it
                keep += 1

    return ChainDraws(
        beta=out_beta[:keep], gamma=out_gamma[:keep], nu=out_nu[:keep],
        lam=out_lam[:keep], response_idx=out_r[:keep], survival_idx=out_s[:keep],
        iteration=out_it[:keep],
    )


def _initial_state(dataset: Dataset) -> ParameterState:
    try:
        return fit_mle(dataset, FULL_CONFIG).state
    except (FitError, ValueError):
        lam0 = max(float(dataset.event.sum()), 1.0) / max(float(dataset.time.sum()), 1e-9)
        return ParameterState(
            beta=np.zeros(4), gamma=np.zeros(6), shape=1.0, rate_scale=lam0,
            config=FULL_CONFIG,
        )


def run_mcmc(dataset: Dataset, prior: PriorSpec, config: SamplerConfig) -> PosteriorDraws:
    """Run the trans-dimensional sampler; chains use independent seed
    substreams derived from (config.seed, chain index)."""
    dataset.require_both_arms()
    init = _initial_state(dataset)
    chains = []
    for c in range(config.chains):
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, c)))
        chains.append(_run_chain(dataset, prior, config, rng, init))
    return PosteriorDraws(chains=chains, seed=config.seed)


def hpd_interval(samples, mass: float = 0.95) -> tuple[float, float]:
    """Shortest contiguous interval holding ceil(mass * n) sorted samples;
    ties broken leftmost."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.shape[0]
    if n < 20:
        raise ValueError("hpd_interval needs at least 20 samples")
    if not (0 < mass < 1):
        raise ValueError("mass must lie in (0, 1)")
    m = int(math.ceil(mass * n))
    widths = x[m - 1:] - x[: n - m + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m - 1])


def split_rhat(chains: list[np.ndarray]) -> float:
    """Split-chain potential scale reduction factor.

    Zero-variance parameters report 1.0 by convention; chains stuck at
    different constants report +inf.
    """
    halves = []
    for c in chains:
        c = np.asarray(c, dtype=float)
        h = c.shape[0] // 2
        if h < 2:
            raise ValueError("each chain needs at least 4 draws")
        halves.append(c[:h])
        halves.append(c[h: 2 * h])
    n = min(h.shape[0] for h in halves)
    halves = [h[:n] for h in halves]
    mat = np.stack(halves)
    within = float(np.mean(np.var(mat, axis=1, ddof=1)))
    between = float(n * np.var(np.mean(mat, axis=1), ddof=1))
    if within == 0.0:
        return 1.0 if between == 0.0 else float("inf")
    var_hat = (n - 1) / n * within + between / n
    return float(math.sqrt(var_hat / within))


@dataclass(frozen=True)
class PosteriorSummary:
    param_names: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    hpd_lower: np.ndarray
    hpd_upper: np.ndarray
    rhat: np.ndarray
    response_probs: np.ndarray   # over RESPONSE_LABELS
    survival_probs: np.ndarray   # over SURVIVAL_LABELS


def summarize_posterior(draws: PosteriorDraws, mass: float = 0.95) -> PosteriorSummary:
    """Empirical model frequencies plus mixture moments and HPD bounds per
    parameter (inactive-draw zeros included)."""
    if draws.size < 100:
        raise ValueError("need at least 100 retained draws")
    params = draws.params()
    mean = params.mean(axis=0)
    sd = params.std(axis=0)
    lower = np.empty(12)
    upper = np.empty(12)
    for j in range(12):
        lower[j], upper[j] = hpd_interval(params[:, j], mass)
    if len(draws.chains) >= 2 and all(c.size >= 4 for c in draws.chains):
        chain_params = [c.params() for c in draws.chains]
        rhat = np.array([
            split_rhat([cp[:, j] for cp in chain_params]) for j in range(12)
        ])
    else:
        rhat = np.array([split_rhat([params[:, j]]) for j in range(12)])
    r_idx = draws.response_idx()
    s_idx = draws.survival_idx()
    m = draws.size
    resp = np.bincount(r_idx, minlength=len(RESPONSE_LABELS)) / m
    surv = np.bincount(s_idx, minlength=len(SURVIVAL_LABELS)) / m
    return PosteriorSummary(
        param_names=PARAM_NAMES, mean=mean, sd=sd,
        hpd_lower=lower, hpd_upper=upper, rhat=rhat,
        response_probs=resp, survival_probs=surv,
    )


DRAWS_HEADER = ("iteration", "chain", "response_model", "survival_model",
                *PARAM_NAMES)


def save_draws(draws: PosteriorDraws, path) -> None:
    """Line-delimited draw records with 17-significant-digit floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DRAWS_HEADER)
        for ci, chain in enumerate(draws.chains):
            params = chain.params()
            for k in range(chain.size):
                writer.writerow([
                    int(chain.iteration[k]), ci,
                    RESPONSE_LABELS[chain.response_idx[k]],
                    SURVIVAL_LABELS[chain.survival_idx[k]],
                    *(fmt_float(v) for v in params[k]),
                ])


def load_draws(path) -> PosteriorDraws:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != DRAWS_HEADER:
            raise ValueError(f"unexpected draws header in {path}")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no draws")
    chain_ids = sorted({int(r[1]) for r in rows})
    chains = []
    r_lookup = {lab: i for i, lab in enumerate(RESPONSE_LABELS)}
    s_lookup = {lab: i for i, lab in enumerate(SURVIVAL_LABELS)}
    for ci in chain_ids:
        sub = [r for r in rows if int(r[1]) == ci]
        params = np.array([[float(v) for v in r[4:]] for r in sub])
        chains.append(ChainDraws(
            beta=params[:, 0:4], gamma=params[:, 4:10],
            nu=params[:, 10], lam=params[:, 11],
            response_idx=np.array([r_lookup[r[2]] for r in sub], dtype=np.int64),
            survival_idx=np.array([s_lookup[r[3]] for r in sub], dtype=np.int64),
            iteration=np.array([int(r[0]) for r in sub], dtype=np.int64),
        ))
    return PosteriorDraws(chains=chains)
