"""Econometric test suite: OLS/Newey-West machinery, rolling betas and
alpha regressions, two-step cross-sectional premia, the joint
pricing-error F-test, and the Bayesian factor-model scan."""

from .bayes import (
    BayesParams,
    ModelPosterior,
    NonPositiveKError,
    SingularCrossProductError,
    cumulative_factor_prob,
    expanding_scan,
    log_q_scalar,
    marginal_likelihood,
    max_sharpe_sq,
    model_scan,
    prior_sensitivity,
    q_scalar,
)
from .fmb import FmbResult, InsufficientCrossSectionError, fama_macbeth, fama_macbeth_pipeline
from .grs import GrsResult, SingularCovarianceError, TooShortSampleError, grs_test, grs_w
from .linreg import (
    InsufficientHistoryError,
    RankDeficientError,
    RegressionFit,
    ZeroVarianceError,
    alpha_regression,
    f_cdf,
    hac_regression_cov,
    newey_west_cov,
    nw_lag_rule,
    ols,
    ols_hac,
    rolling_betas,
    standardize,
    with_intercept,
)

__all__ = [
    "BayesParams",
    "ModelPosterior",
    "NonPositiveKError",
    "SingularCrossProductError",
    "cumulative_factor_prob",
    "expanding_scan",
    "log_q_scalar",
    "marginal_likelihood",
    "max_sharpe_sq",
    "model_scan",
    "prior_sensitivity",
    "q_scalar",
    "FmbResult",
    "InsufficientCrossSectionError",
    "fama_macbeth",
    "fama_macbeth_pipeline",
    "GrsResult",
    "SingularCovarianceError",
    "TooShortSampleError",
    "grs_test",
    "grs_w",
    "InsufficientHistoryError",
    "RankDeficientError",
    "RegressionFit",
    "ZeroVarianceError",
    "alpha_regression",
    "f_cdf",
    "hac_regression_cov",
    "newey_west_cov",
    "nw_lag_rule",
    "ols",
    "ols_hac",
    "rolling_betas",
    "standardize",
    "with_intercept",
]
