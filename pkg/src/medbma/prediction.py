"""Posterior-predictive simulation of trial outcomes and predictive power.

For each posterior draw, response is generated from the logistic model,
survival times by inverse-CDF sampling from the Weibull-PH model, and
everything is administratively censored at the landmark.  The two-sample
log-rank test at level alpha is applied per draw; predictive power is
the fraction of significant draws.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, spearmanr

from .data import Dataset
from .sampler import PosteriorDraws
from .model_space import response_design_matrix, survival_design_matrix


@dataclass(frozen=True)
class TestFrame:
    """Subjects to predict: arms, covariates, and optionally known responses."""

    arm: np.ndarray
    covariate: np.ndarray
    response: np.ndarray | None = None

    def __post_init__(self):
        arm = np.asarray(self.arm, dtype=float)
        cov = np.asarray(self.covariate, dtype=float)
        if arm.shape != cov.shape or arm.ndim != 1:
            raise ValueError("arm and covariate must be 1-D of equal length")
        if not np.isin(arm, (0.0, 1.0)).all():
            raise ValueError("arm must be binary")
        if not np.isfinite(cov).all():
            raise ValueError("covariate must be finite")
        object.__setattr__(self, "arm", arm)
        object.__setattr__(self, "covariate", cov)
        if self.response is not None:
            resp = np.asarray(self.response, dtype=float)
            if resp.shape != arm.shape or not np.isin(resp, (0.0, 1.0)).all():
                raise ValueError("known responses must be binary and match arm length")
            object.__setattr__(self, "response", resp)

    @property
    def n(self) -> int:
        return self.arm.shape[0]


@dataclass(frozen=True)
class PredictionRequest:
    mode: str  # "future_study" or "interim_completion"
    test_frame: TestFrame
    landmark: float
    alpha: float = 0.05

    def __post_init__(self):
        if self.mode not in ("future_study", "interim_completion"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.landmark <= 0:
            raise ValueError("landmark must be positive")
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class PowerResult:
    power: float
    pvalues: np.ndarray
    draws_used: int


def predict_response(frame: TestFrame, beta, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli responses from the logistic model of one posterior draw."""
    dr = response_design_matrix(frame.arm, frame.covariate)
    eta = dr @ np.asarray(beta, dtype=float)
    pi = 1.0 / (1.0 + np.exp(-eta))
    return (rng.random(frame.n) < pi).astype(float)


def predict_survival(frame: TestFrame, response, gamma, nu: float, lam: float,
                     landmark: float, rng: np.random.Generator):
    """Inverse-CDF Weibull-PH times censored at the landmark.

    T* = (-log U / (lam e^eta))^(1/nu); the event indicator is
    1{T* <= landmark} (a boundary hit counts as observed).
    """
    ds = survival_design_matrix(frame.arm, response, frame.covariate)
    eta = ds @ np.asarray(gamma, dtype=float)
    u = rng.random(frame.n)
    t_star = np.power(-np.log(u) / (lam * np.exp(eta)), 1.0 / nu)
    t_p = np.minimum(t_star, landmark)
    delta_p = (t_star <= landmark).astype(float)
    return t_p, delta_p


def logrank_test(times, events, arms) -> tuple[float, float]:
    """Two-sample log-rank chi-square (1 df) with the hypergeometric
    variance; ties are grouped at identical times."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(events, dtype=float)
    a = np.asarray(arms, dtype=float)
    if not ((a == 0).any() and (a == 1).any()):
        raise ValueError("both arms must be present")
    if d.sum() == 0:
        warnings.warn("log-rank test with no events; p-value set to 1")
        return 0.0, 1.0
    order = np.argsort(t, kind="stable")
    t, d, a = t[order], d[order], a[order]
    event_times = np.unique(t[d == 1])
    # at-risk counts: subjects with T >= tj
    n_at = t.shape[0] - np.searchsorted(t, event_times, side="left")
    t1 = np.sort(t[a == 1])
    n1_at = t1.shape[0] - np.searchsorted(t1, event_times, side="left")
    te = t[d == 1]
    ae = a[d == 1]
    dj = np.array([np.count_nonzero(te == s) for s in event_times], dtype=float)
    d1j = np.array([np.count_nonzero(te[ae == 1] == s) for s in event_times],
                   dtype=float)
    frac = n1_at / n_at
    expected = dj * frac
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.where(
            n_at > 1,
            dj * frac * (1.0 - frac) * (n_at - dj) / (n_at - 1.0),
            0.0,
        )
    o_minus_e = float(d1j.sum() - expected.sum())
    v = float(var.sum())
    if v <= 0.0:
        return 0.0, 1.0
    stat = o_minus_e * o_minus_e / v
    return stat, float(chi2.sf(stat, df=1))


def predictive_power(
    draws: PosteriorDraws,
    request: PredictionRequest,
    observed_interim: Dataset | None = None,
    seed: int = 0,
    max_draws: int | None = None,
) -> PowerResult:
    """Per-draw predicted trial outcome plus log-rank test.

    In ``future_study`` mode the predicted records are tested alone; in
    ``interim_completion`` mode they are pooled with the observed interim
    data.  Each draw uses an independent RNG substream keyed by
    (seed, draw index).
    """
    if draws.size < 100:
        raise ValueError("need at least 100 retained draws")
    if request.mode == "interim_completion" and observed_interim is None:
        raise ValueError("interim_completion mode requires observed interim data")
    params = draws.params()
    m_total = params.shape[0]
    if max_draws is not None and max_draws < m_total:
        idx = np.linspace(0, m_total - 1, max_draws).astype(np.int64)
        params = params[idx]
    m = params.shape[0]
    frame = request.test_frame
    pvals = np.empty(m)
    if observed_interim is not None:
        obs = (observed_interim.time, observed_interim.event, observed_interim.arm)
    for i in range(m):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        beta = params[i, 0:4]
        gamma = params[i, 4:10]
        nu, lam = params[i, 10], params[i, 11]
        if frame.response is not None:
            y = frame.response
            rng.random(frame.n)  # keep the stream layout fixed across modes
        else:
            y = predict_response(frame, beta, rng)
        t_p, delta_p = predict_survival(frame, y, gamma, nu, lam,
                                        request.landmark, rng)
        if request.mode == "interim_completion":
            times = np.concatenate([obs[0], t_p])
            events = np.concatenate([obs[1], delta_p])
            arms = np.concatenate([obs[2], frame.arm])
        else:
            times, events, arms = t_p, delta_p, frame.arm
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, pvals[i] = logrank_test(times, events, arms)
    power = float((pvals < request.alpha).mean())
    return PowerResult(power=power, pvalues=pvals, draws_used=m)


@dataclass(frozen=True)
class PredictionEvaluation:
    spearman_rho: float
    roc_points: np.ndarray  # (k, 2) of (fpr, tpr)
    auc: float


def evaluate_predictions(powers, realized_pvalues, alpha: float = 0.05
                         ) -> PredictionEvaluation:
    """Spearman correlation of (1 - power) with realized p-values, and the
    ROC/AUC of power as a classifier of realized significance."""
    powers = np.asarray(powers, dtype=float)
    pvals = np.asarray(realized_pvalues, dtype=float)
    if powers.shape != pvals.shape or powers.ndim != 1:
        raise ValueError("powers and realized p-values must be 1-D of equal length")
    if np.ptp(powers) == 0 or np.ptp(pvals) == 0:
        rho = float("nan")
    else:
        rho = float(spearmanr(1.0 - powers, pvals).statistic)
    labels = pvals < alpha
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        return PredictionEvaluation(rho, np.empty((0, 2)), float("nan"))
    order = np.argsort(-powers, kind="stable")
    sorted_scores = powers[order]
    cut = np.nonzero(np.diff(sorted_scores))[0]  # group tied scores
    cut = np.concatenate([cut, [sorted_scores.shape[0] - 1]])
    tp = np.cumsum(labels[order])[cut]
    fp = np.cumsum(~labels[order])[cut]
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    auc = float(np.trapezoid(tpr, fpr))
    return PredictionEvaluation(rho, np.column_stack([fpr, tpr]), auc)
