"""Log-likelihoods, priors, survival functions, MLE fitting and AIC.

The response model is logistic: logit P(Y=1) = Dr beta with
Dr = (1, A, X, A*X).  The survival model is Weibull proportional
hazards: h(t) = nu*lam*t^(nu-1) * exp(Ds gamma), so S(t) =
exp(-lam t^nu e^(Ds gamma)).  Indicators gate coefficients: an inactive
coefficient is exactly zero and contributes nothing to the likelihood
or the prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .model_space import (
    FULL_CONFIG,
    ModelConfiguration,
    response_design_matrix,
    survival_design_matrix,
)


class FitError(RuntimeError):
    """MLE fitting failure (non-convergence or separation)."""


@dataclass(frozen=True)
class ParameterState:
    """Full parameter vector (beta, gamma, nu, lam) plus active configuration."""

    beta: np.ndarray
    gamma: np.ndarray
    shape: float
    rate_scale: float
    config: ModelConfiguration

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).copy()
        gamma = np.asarray(self.gamma, dtype=float).copy()
        if beta.shape != (4,) or gamma.shape != (6,):
            raise ValueError("beta must have length 4 and gamma length 6")
        if not (self.shape > 0 and self.rate_scale > 0):
            raise ValueError("Weibull shape and rate must be positive")
        z = np.array(self.config.response, dtype=float)
        w = np.array(self.config.survival, dtype=float)
        if np.any(beta[1:][z == 0] != 0.0):
            raise ValueError("beta has nonzero entries for inactive indicators")
        if np.any(gamma[w == 0] != 0.0):
            raise ValueError("gamma has nonzero entries for inactive indicators")
        beta.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)


@dataclass(frozen=True)
class PriorSpec:
    """Normal coefficient priors, Gamma priors for the Weibull pair, and
    Bernoulli indicator priors."""

    coef_sd: float = 100.0
    weibull_shape_hyper: float = 0.001
    weibull_rate_hyper: float = 0.001
    psi_z: np.ndarray = field(default_factory=lambda: np.full(3, 0.5))
    psi_w: np.ndarray = field(default_factory=lambda: np.full(6, 0.5))

    def __post_init__(self):
        psi_z = np.asarray(self.psi_z, dtype=float)
        psi_w = np.asarray(self.psi_w, dtype=float)
        if psi_z.shape != (3,) or psi_w.shape != (6,):
            raise ValueError("psi_z must have length 3, psi_w length 6")
        if not (self.coef_sd > 0 and self.weibull_shape_hyper > 0
                and self.weibull_rate_hyper > 0):
            raise ValueError("prior hyperparameters must be positive")
        if np.any(psi_z <= 0) or np.any(psi_z >= 1) or np.any(psi_w <= 0) or np.any(psi_w >= 1):
            raise ValueError("psi components must lie in (0, 1)")
        psi_z.setflags(write=False)
        psi_w.setflags(write=False)
        object.__setattr__(self, "psi_z", psi_z)
        object.__setattr__(self, "psi_w", psi_w)


def _masked_beta(beta, z) -> np.ndarray:
    b = np.asarray(beta, dtype=float).copy()
    b[1:] *= np.asarray(z, dtype=float)
    return b


def _masked_gamma(gamma, w) -> np.ndarray:
    return np.asarray(gamma, dtype=float) * np.asarray(w, dtype=float)


def response_loglik(dataset: Dataset, beta, z) -> float:
    """Binomial log-likelihood sum_i [Y_i eta_i - log(1 + e^eta_i)]."""
    dr = response_design_matrix(dataset.arm, dataset.covariate)
    eta = dr @ _masked_beta(beta, z)
    return float(dataset.response @ eta - np.logaddexp(0.0, eta).sum())


def response_loglik_grad(dataset: Dataset, beta, z) -> np.ndarray:
    """Gradient with respect to the full beta vector (zero for inactive terms)."""
    dr = response_design_matrix(dataset.arm, dataset.covariate)
    eta = dr @ _masked_beta(beta, z)
    resid = dataset.response - _sigmoid(eta)
    g = dr.T @ resid
    g[1:] *= np.asarray(z, dtype=float)
    return g


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def survival_loglik(dataset: Dataset, gamma, nu: float, lam: float, w) -> float:
    """Weibull-PH log-likelihood with right censoring."""
    if not (nu > 0 and lam > 0):
        raise ValueError("nu and lam must be positive")
    if np.any((dataset.event == 1) & (dataset.time <= 0)):
        raise ValueError("event rows require strictly positive times")
    ds = survival_design_matrix(dataset.arm, dataset.response, dataset.covariate)
    eta = ds @ _masked_gamma(gamma, w)
    t = dataset.time
    delta = dataset.event
    log_t = np.log(np.where(t > 0, t, 1.0))
    tnu = np.power(t, nu)
    ll = delta @ (math.log(nu) + math.log(lam) + (nu - 1.0) * log_t + eta)
    ll -= lam * (tnu @ np.exp(eta))
    return float(ll)


def survival_loglik_grad(dataset: Dataset, gamma, nu: float, lam: float, w):
    """Gradient as (dgamma (length 6, zero for inactive), dnu, dlam)."""
    ds = survival_design_matrix(dataset.arm, dataset.response, dataset.covariate)
    eta = ds @ _masked_gamma(gamma, w)
    t = dataset.time
    delta = dataset.event
    log_t = np.log(np.where(t > 0, t, 1.0))
    u = lam * np.power(t, nu) * np.exp(eta)  # per-subject cumulative hazard
    dgamma = ds.T @ (delta - u)
    dgamma *= np.asarray(w, dtype=float)
    dnu = float(delta @ (1.0 / nu + log_t) - u @ log_t)
    dlam = float((delta.sum() - u.sum()) / lam)
    return dgamma, dnu, dlam


def survival_probability(t, design_row, gamma, nu: float, lam: float):
    """S(t) = exp(-lam t^nu e^(design_row . gamma)); S(0) = 1."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    eta = float(np.asarray(design_row, dtype=float) @ np.asarray(gamma, dtype=float))
    return np.exp(-lam * np.power(t, nu) * math.exp(eta))


def _normal_logpdf(x: float, sd: float) -> float:
    return -0.5 * math.log(2.0 * math.pi * sd * sd) - 0.5 * (x / sd) ** 2


def _gamma_logpdf(x: float, shape: float, rate: float) -> float:
    return (shape * math.log(rate) - math.lgamma(shape)
            + (shape - 1.0) * math.log(x) - rate * x)


def log_prior(state: ParameterState, prior: PriorSpec) -> float:
    """Normal log-densities over the intercept and active coefficients,
    Gamma log-densities for nu and lam, Bernoulli log-masses for all
    indicators.  Inactive coefficients are point masses at zero and
    contribute nothing."""
    z = np.array(state.config.response)
    w = np.array(state.config.survival)
    lp = _normal_logpdf(state.beta[0], prior.coef_sd)
    for j in range(3):
        if z[j]:
            lp += _normal_logpdf(state.beta[j + 1], prior.coef_sd)
    for j in range(6):
        if w[j]:
            lp += _normal_logpdf(state.gamma[j], prior.coef_sd)
    lp += _gamma_logpdf(state.shape, prior.weibull_shape_hyper, prior.weibull_rate_hyper)
    lp += _gamma_logpdf(state.rate_scale, prior.weibull_shape_hyper, prior.weibull_rate_hyper)
    lp += float(z @ np.log(prior.psi_z) + (1 - z) @ np.log1p(-prior.psi_z))
    lp += float(w @ np.log(prior.psi_w) + (1 - w) @ np.log1p(-prior.psi_w))
    return lp


GRAD_TOL = 1e-8
MAX_NEWTON_ITERS = 200
SEPARATION_BOUND = 30.0


def _damped_newton(x0, value_grad_hess, max_coef=None, tol=GRAD_TOL):
    """Maximize via Newton steps with halving; converge at grad max-norm tol."""
    x = np.asarray(x0, dtype=float).copy()
    f, g, h = value_grad_hess(x)
    for _ in range(MAX_NEWTON_ITERS):
        if np.max(np.abs(g)) < tol:
            return x, f
        try:
            step = np.linalg.solve(-h, g)
        except np.linalg.LinAlgError:
            step = g  # fall back to gradient ascent near singular Hessian
        accepted = False
        for _ in range(40):
            x_new = x + step
            f_new, g_new, h_new = value_grad_hess(x_new)
            if np.isfinite(f_new) and f_new >= f - 1e-12:
                x, f, g, h = x_new, f_new, g_new, h_new
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        if (max_coef is not None and max_coef[0] > 0
                and np.max(np.abs(x[: max_coef[0]])) > max_coef[1]):
            raise FitError(
                f"separation suspected: coefficient magnitude exceeds {max_coef[1]}"
            )
    if np.max(np.abs(g)) < tol:
        return x, f
    raise FitError(f"Newton did not converge: gradient max-norm {np.max(np.abs(g)):.3e}")


def fit_response_mle(dataset: Dataset, z):
    """Logistic MLE over the intercept and active terms (IRLS-style Newton).

    Returns (beta, loglik, k, aic) with beta a full length-4 vector.
    """
    dataset.require_both_arms()
    dr_full = response_design_matrix(dataset.arm, dataset.covariate)
    active = [0] + [j + 1 for j in range(3) if int(z[j])]
    dr = dr_full[:, active]
    y = dataset.response

    def vgh(b):
        eta = dr @ b
        p = _sigmoid(eta)
        f = float(y @ eta - np.logaddexp(0.0, eta).sum())
        g = dr.T @ (y - p)
        wgt = p * (1.0 - p)
        h = -(dr.T * wgt) @ dr
        return f, g, h

    b_act, ll = _damped_newton(
        np.zeros(len(active)), vgh, max_coef=(len(active), SEPARATION_BOUND),
        tol=GRAD_TOL * max(1.0, dataset.n),
    )
    beta = np.zeros(4)
    beta[active] = b_act
    k = len(active)
    return beta, ll, k, -2.0 * ll + 2.0 * k


def fit_survival_mle(dataset: Dataset, w):
    """Weibull-PH MLE over active gamma terms and (nu, lam), via Newton in
    (gamma, log nu, log lam).

    Returns (gamma, nu, lam, loglik, k, aic); k counts active terms plus
    the two Weibull parameters.
    """
    dataset.require_both_arms()
    ds_full = survival_design_matrix(dataset.arm, dataset.response, dataset.covariate)
    active = [j for j in range(6) if int(w[j])]
    ds = ds_full[:, active]
    t = dataset.time
    delta = dataset.event
    if np.any((delta == 1) & (t <= 0)):
        raise ValueError("event rows require strictly positive times")
    log_t = np.log(np.where(t > 0, t, 1.0))
    d_sum = float(delta.sum())
    d_logt = float(delta @ log_t)
    d_cols = ds.T @ delta
    p = len(active)

    def vgh(x):
        g_act, a, b = x[:p], x[p], x[p + 1]
        nu, lam = math.exp(a), math.exp(b)
        eta = ds @ g_act
        tnu = np.power(t, nu)
        u = lam * tnu * np.exp(eta)
        f = d_sum * (a + b) + (nu - 1.0) * d_logt + float(delta @ eta) - float(u.sum())
        u_sum = float(u.sum())
        u_logt = float(u @ log_t)
        u_logt2 = float(u @ (log_t * log_t))
        grad = np.empty(p + 2)
        grad[:p] = d_cols - ds.T @ u
        grad[p] = d_sum + nu * d_logt - nu * u_logt
        grad[p + 1] = d_sum - u_sum
        hess = np.empty((p + 2, p + 2))
        hess[:p, :p] = -(ds.T * u) @ ds
        h_ga = -nu * (ds.T @ (u * log_t))
        h_gb = -(ds.T @ u)
        hess[:p, p] = h_ga
        hess[p, :p] = h_ga
        hess[:p, p + 1] = h_gb
        hess[p + 1, :p] = h_gb
        hess[p, p] = nu * d_logt - nu * u_logt - nu * nu * u_logt2
        hess[p, p + 1] = -nu * u_logt
        hess[p + 1, p] = -nu * u_logt
        hess[p + 1, p + 1] = -u_sum
        return f, grad, hess

    # exponential-rate start: lam = events / total time
    lam0 = max(d_sum, 1.0) / max(float(t.sum()), 1e-12)
    x0 = np.zeros(p + 2)
    x0[p + 1] = math.log(lam0)
    x_opt, ll = _damped_newton(x0, vgh, max_coef=(p, SEPARATION_BOUND),
                               tol=GRAD_TOL * max(1.0, dataset.n))
    gamma = np.zeros(6)
    gamma[active] = x_opt[:p]
    nu, lam = math.exp(x_opt[p]), math.exp(x_opt[p + 1])
    k = p + 2
    return gamma, nu, lam, ll, k, -2.0 * ll + 2.0 * k


@dataclass(frozen=True)
class FitResult:
    state: ParameterState
    loglik: float
    aic: float
    k: int
    response_loglik: float
    response_aic: float
    survival_loglik: float
    survival_aic: float


def fit_mle(dataset: Dataset, config: ModelConfiguration = FULL_CONFIG) -> FitResult:
    """Joint MLE of both model parts; AIC uses k = active coefficients
    + intercept + 2 Weibull parameters."""
    beta, ll_r, k_r, aic_r = fit_response_mle(dataset, config.response)
    gamma, nu, lam, ll_s, k_s, aic_s = fit_survival_mle(dataset, config.survival)
    state = ParameterState(beta=beta, gamma=gamma, shape=nu, rate_scale=lam,
                           config=config)
    ll = ll_r + ll_s
    k = k_r + k_s
    return FitResult(
        state=state, loglik=ll, aic=-2.0 * ll + 2.0 * k, k=k,
        response_loglik=ll_r, response_aic=aic_r,
        survival_loglik=ll_s, survival_aic=aic_s,
    )
