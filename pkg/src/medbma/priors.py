"""Model prior probabilities induced by constrained Bernoulli indicators,
and calibration of psi toward target model weights.

Each valid configuration gets mass proportional to
prod_j psi_j^ind_j (1-psi_j)^(1-ind_j), normalized over the valid
configurations only.  Calibration minimizes the standard deviation of
(probability / target weight) over psi in a box, first by seeded
simulated annealing, then a Nelder-Mead polish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import rankdata

from .model_space import (
    RESPONSE_LABELS,
    RESPONSE_TABLE,
    SURVIVAL_LABELS,
    SURVIVAL_TABLE,
)

PSI_LO, PSI_HI = 0.01, 0.99

_FAMILY = {
    "response": (np.array(RESPONSE_TABLE, dtype=float), RESPONSE_LABELS),
    "survival": (np.array(SURVIVAL_TABLE, dtype=float), SURVIVAL_LABELS),
}


@dataclass(frozen=True)
class ModelPriorTable:
    labels: tuple[str, ...]
    probabilities: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        p.setflags(write=False)
        psi = np.asarray(self.psi, dtype=float)
        psi.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "psi", psi)


@dataclass(frozen=True)
class CalibrationResult:
    psi: np.ndarray
    table: ModelPriorTable
    residual: float


def _family_matrix(family: str):
    try:
        return _FAMILY[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; expected 'response' or 'survival'")


def _probs(ind: np.ndarray, psi: np.ndarray) -> np.ndarray:
    logmass = ind @ np.log(psi) + (1.0 - ind) @ np.log1p(-psi)
    mass = np.exp(logmass - logmass.max())
    return mass / mass.sum()


def model_prior_probs(psi, family: str) -> ModelPriorTable:
    ind, labels = _family_matrix(family)
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (ind.shape[1],):
        raise ValueError(f"psi must have length {ind.shape[1]} for family {family!r}")
    if np.any(psi <= 0) or np.any(psi >= 1):
        raise ValueError("psi components must lie in (0, 1)")
    return ModelPriorTable(labels=labels, probabilities=_probs(ind, psi), psi=psi)


def aic_rank_weights(aics) -> np.ndarray:
    """Reverse-rank weights: smallest AIC gets weight m, largest 1;
    ties share the average of their ranks."""
    aics = np.asarray(aics, dtype=float)
    if not np.isfinite(aics).all():
        raise ValueError("AIC values must be finite")
    m = aics.shape[0]
    return m + 1.0 - rankdata(aics)


def calibrate_psi(
    targets,
    family: str,
    seed: int = 0,
    anneal_evals: int = 100_000,
) -> CalibrationResult:
    """Search psi minimizing stdev(prob_i / target_i), annealing then polishing.

    Best-effort: always returns the best psi found with its residual.
    """
    ind, _ = _family_matrix(family)
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (ind.shape[0],):
        raise ValueError(f"expected {ind.shape[0]} targets for family {family!r}")
    if np.any(targets <= 0):
        raise ValueError("targets must be positive")
    d = ind.shape[1]
    log_psi_clip = (np.log(PSI_LO), np.log(PSI_HI))

    def objective(psi: np.ndarray) -> float:
        psi = np.clip(psi, PSI_LO, PSI_HI)
        return float(np.std(_probs(ind, psi) / targets))

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x9E3779B9)))
    psi = np.full(d, 0.5)
    f = objective(psi)
    best_psi, best_f = psi.copy(), f
    temp = max(f, 1e-3)
    cool = (1e-8 / temp) ** (1.0 / max(anneal_evals, 1))
    scale = 0.25
    for _ in range(anneal_evals):
        cand = np.clip(psi + rng.normal(scale=scale, size=d), PSI_LO, PSI_HI)
        fc = objective(cand)
        if fc <= f or rng.random() < np.exp(-(fc - f) / temp):
            psi, f = cand, fc
            if f < best_f:
                best_psi, best_f = psi.copy(), f
        temp *= cool
        scale = max(scale * cool ** 0.5, 1e-4)

    res = minimize(
        objective, best_psi, method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20_000},
    )
    if res.fun < best_f:
        best_psi, best_f = np.clip(res.x, PSI_LO, PSI_HI), float(res.fun)
    # polish again from the equal-mass point, which is the exact optimum
    # for flat targets
    res2 = minimize(
        objective, np.full(d, 0.5), method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20_000},
    )
    if res2.fun < best_f:
        best_psi, best_f = np.clip(res2.x, PSI_LO, PSI_HI), float(res2.fun)
    table = model_prior_probs(best_psi, family)
    return CalibrationResult(psi=best_psi, table=table, residual=best_f)
