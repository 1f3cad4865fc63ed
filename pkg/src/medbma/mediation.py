"""Log risk ratios (total / direct / mediated) and mediation proportion
over a time grid, with pointwise credible intervals.

Per posterior draw and time point t:
  S0(t) = mean survival over control subjects at their observed (Y, X);
  S1(t) = mean survival over treated subjects;
  S*(t) = mean over control subjects with the arm flipped to treatment
          but response and covariate retained.
Then lRR_tot = log S1 - log S0, lRR_d = log S* - log S0,
lRR_m = log S1 - log S*, and Med% = (S1 - S*) / (S1 - S0).  Draws where
|S1 - S0| falls below tolerance are excluded from the Med% summary only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .likelihood import ParameterState
from .sampler import PosteriorDraws
from .model_space import survival_design_matrix

MED_TOL = 1e-12

CURVE_NAMES = ("lrr_tot", "lrr_d", "lrr_m", "med_pct")


def time_grid(landmark: float, points: int = 100) -> np.ndarray:
    """Default grid: equally spaced from 0.01 * landmark to the landmark."""
    if landmark <= 0:
        raise ValueError("landmark must be positive")
    return np.linspace(0.01 * landmark, landmark, points)


def _validate_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.shape[0] == 0:
        raise ValueError("grid must be a non-empty 1-D array")
    if np.any(g <= 0) or np.any(np.diff(g) <= 0):
        raise ValueError("grid times must be strictly increasing and positive")
    return g


def _group_means(dataset: Dataset, gamma, nu, lam, grid):
    """(S0, S1, S*) each of shape (len(grid),) for one parameter point."""
    ds = survival_design_matrix(dataset.arm, dataset.response, dataset.covariate)
    ds_star = survival_design_matrix(
        np.ones(dataset.n), dataset.response, dataset.covariate
    )
    gamma = np.asarray(gamma, dtype=float)
    eta = ds @ gamma
    eta_star = ds_star @ gamma
    ctrl = dataset.arm == 0
    trt = dataset.arm == 1
    if not ctrl.any() or not trt.any():
        raise ValueError("both arms must contain at least one subject")
    tnu = np.power(grid, nu)
    c0 = lam * np.exp(eta[ctrl])
    c1 = lam * np.exp(eta[trt])
    cs = lam * np.exp(eta_star[ctrl])
    s0 = np.exp(-np.outer(c0, tnu)).mean(axis=0)
    s1 = np.exp(-np.outer(c1, tnu)).mean(axis=0)
    s_star = np.exp(-np.outer(cs, tnu)).mean(axis=0)
    return s0, s1, s_star


def group_survival_means(dataset: Dataset, state: ParameterState, t):
    """Mean group survival probabilities (S0, S1, S*) at time(s) t."""
    grid = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(grid < 0):
        raise ValueError("t must be non-negative")
    s0, s1, s_star = _group_means(
        dataset, state.gamma, state.shape, state.rate_scale, grid
    )
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return float(s0[0]), float(s1[0]), float(s_star[0])
    return s0, s1, s_star


@dataclass
class RiskRatioCurves:
    """Per-draw group survival means and the derived effect curves."""

    times: np.ndarray       # (tau,)
    s0: np.ndarray          # (M, tau)
    s1: np.ndarray          # (M, tau)
    s_star: np.ndarray      # (M, tau)

    @property
    def n_draws(self) -> int:
        return self.s0.shape[0]

    @property
    def lrr_tot(self) -> np.ndarray:
        return np.log(self.s1) - np.log(self.s0)

    @property
    def lrr_d(self) -> np.ndarray:
        return np.log(self.s_star) - np.log(self.s0)

    @property
    def lrr_m(self) -> np.ndarray:
        return np.log(self.s1) - np.log(self.s_star)

    def med_pct(self) -> np.ma.MaskedArray:
        """(M, tau) mediation proportion, masked where |S1-S0| < tolerance."""
        denom = self.s1 - self.s0
        mask = np.abs(denom) < MED_TOL
        safe = np.where(mask, 1.0, denom)
        return np.ma.masked_array((self.s1 - self.s_star) / safe, mask=mask)

    def med_exclusions(self) -> np.ndarray:
        """Per-time count of draws excluded from the Med% summary."""
        return np.abs(self.s1 - self.s0) < MED_TOL

    def summary(self) -> dict[str, dict[str, np.ndarray]]:
        """Pointwise mean / median / 2.5% / 97.5% per curve."""
        out: dict[str, dict[str, np.ndarray]] = {}
        for name, vals in (("lrr_tot", self.lrr_tot), ("lrr_d", self.lrr_d),
                           ("lrr_m", self.lrr_m)):
            out[name] = {
                "mean": vals.mean(axis=0),
                "median": np.median(vals, axis=0),
                "q2.5": np.quantile(vals, 0.025, axis=0),
                "q97.5": np.quantile(vals, 0.975, axis=0),
            }
        med = self.med_pct()
        excl = self.med_exclusions().sum(axis=0)
        tau = self.times.shape[0]
        stats = {k: np.full(tau, np.nan) for k in ("mean", "median", "q2.5", "q97.5")}
        for k in range(tau):
            col = med[:, k].compressed()
            if col.size:
                stats["mean"][k] = col.mean()
                stats["median"][k] = np.median(col)
                stats["q2.5"][k] = np.quantile(col, 0.025)
                stats["q97.5"][k] = np.quantile(col, 0.975)
        stats["excluded"] = excl.astype(float)
        out["med_pct"] = stats
        return out


def risk_ratio_curves(dataset: Dataset, draws: PosteriorDraws, grid) -> RiskRatioCurves:
    """Evaluate the effect curves for every retained draw over the grid."""
    grid = _validate_grid(grid)
    if draws.size < 100:
        raise ValueError("need at least 100 retained draws")
    params = draws.params()
    m = params.shape[0]
    tau = grid.shape[0]
    s0 = np.empty((m, tau))
    s1 = np.empty((m, tau))
    s_star = np.empty((m, tau))
    for i in range(m):
        gamma = params[i, 4:10]
        nu, lam = params[i, 10], params[i, 11]
        s0[i], s1[i], s_star[i] = _group_means(dataset, gamma, nu, lam, grid)
    return RiskRatioCurves(times=grid, s0=s0, s1=s1, s_star=s_star)


def true_curves(beta_true, gamma_true, nu_true: float, lam_true: float, grid,
                n_population: int = 100_000, seed: int = 0) -> RiskRatioCurves:
    """Reference curves at the single true parameter point, evaluated over a
    large synthetic population."""
    from .simulation import _generate_population  # local import avoids a cycle

    grid = _validate_grid(grid)
    arm, x, y = _generate_population(beta_true, n_population, seed)
    dataset = Dataset(arm=arm, covariate=x, response=y,
                      time=np.ones(n_population), event=np.ones(n_population))
    s0, s1, s_star = _group_means(dataset, gamma_true, nu_true, lam_true, grid)
    return RiskRatioCurves(
        times=grid, s0=s0[None, :], s1=s1[None, :], s_star=s_star[None, :]
    )


def write_curves_csv(curves: RiskRatioCurves, path, names=CURVE_NAMES) -> None:
    """One row per (time, curve): time, curve, mean, median, q2.5, q97.5."""
    import csv

    from .data import fmt_float

    summary = curves.summary()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "curve", "mean", "median", "q2.5", "q97.5",
                         "excluded_draws"])
        for name in names:
            stats = summary[name]
            excl = stats.get("excluded", np.zeros_like(curves.times))
            for k, t in enumerate(curves.times):
                writer.writerow([
                    fmt_float(t), name,
                    fmt_float(stats["mean"][k]), fmt_float(stats["median"][k]),
                    fmt_float(stats["q2.5"][k]), fmt_float(stats["q97.5"][k]),
                    int(excl[k]),
                ])
