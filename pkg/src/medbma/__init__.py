"""Bayesian model-averaged mediation analysis for tumor response and
survival outcomes."""

__version__ = "0.1.0"

from .data import (
    CovariatePolicy,
    DataError,
    Dataset,
    MissingRule,
    SubjectRecord,
    load_dataset,
    summarize,
    write_dataset,
)
from .likelihood import FitError, ParameterState, PriorSpec, fit_mle
from .model_space import (
    ModelConfiguration,
    classify_response,
    classify_survival,
    enumerate_response_models,
    enumerate_survival_models,
)
from .priors import aic_rank_weights, calibrate_psi, model_prior_probs
from .sampler import (
    PosteriorDraws,
    SamplerConfig,
    hpd_interval,
    run_mcmc,
    split_rhat,
    summarize_posterior,
)
from .mediation import group_survival_means, risk_ratio_curves, time_grid, true_curves
from .prediction import (
    PredictionRequest,
    TestFrame,
    evaluate_predictions,
    logrank_test,
    predict_response,
    predict_survival,
    predictive_power,
)
from .simulation import (
    SCENARIOS,
    generate_dataset,
    get_scenario,
    run_power_study,
    run_replication_study,
    true_hazard_ratio,
)

__all__ = [name for name in dir() if not name.startswith("_")]
