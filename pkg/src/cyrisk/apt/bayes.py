"""Closed-form Bayesian comparison of factor models.

Every model contains the market factor plus a non-empty proper subset of
the candidate factors.  A model's marginal likelihood is the product of
an unrestricted regression likelihood of its own factors on the market
and a restricted (zero-intercept) likelihood of the excluded factors on
the model's factors; the common test-asset term cancels in the posterior
normalization and is omitted.  All work happens in log space so the
determinant powers stay finite.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..errors import DataError, NumericError
from .grs import SingularCovarianceError, grs_test, grs_w

log = logging.getLogger(__name__)

MIN_SCAN_MONTHS = 36
PRIOR_MULTIPLES = (1.25, 1.5, 2.0, 3.0)


class NonPositiveKError(NumericError):
    """Prior Sharpe bound does not exceed the factor set's Sharpe ratio."""


class SingularCrossProductError(NumericError):
    """A cross-product matrix in the marginal likelihood is singular."""


@dataclass(frozen=True)
class BayesParams:
    """Scan configuration; the prior multiple scales the market Sharpe
    ratio into the maximum Sharpe ratio believed attainable."""

    prior_multiple: float = 1.5
    market: str = "mkt_rf"
    candidates: tuple[str, ...] = ("smb", "hml", "mom", "rmw", "cma", "cyber")
    start: Optional[str] = None
    end: Optional[str] = None

    def __post_init__(self):
        if self.prior_multiple <= 1:
            raise ValueError("prior_multiple must exceed 1")
        if self.market in self.candidates:
            raise ValueError("market cannot be a candidate factor")


@dataclass
class ModelPosterior:
    model_key: str
    factors: tuple[str, ...]
    log_ml_u: float
    log_ml_r: float
    log_ml: float
    posterior: float
    error: Optional[str] = None


def max_sharpe_sq(Y) -> float:
    """Squared sample Sharpe ratio of the tangency portfolio of a factor
    set: mean' Cov^-1 mean with sample (ddof=1) moments."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    mu = Y.mean(axis=0)
    cov = np.cov(Y.T, ddof=1).reshape(Y.shape[1], Y.shape[1])
    try:
        sol = np.linalg.solve(cov, mu)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("singular factor covariance") from exc
    if not np.all(np.isfinite(sol)):
        raise SingularCovarianceError("non-finite factor covariance solve")
    return float(mu @ sol)


def log_q_scalar(
    W: float, sh_y_sq: float, sh_max_sq: float, T: int, K: int, N: int
) -> float:
    """log of Q = (1 + (a/(a+k)) W/T)^(-(T-K)/2) * (1 + k/a)^(-N/2)
    with a = (1 + Sh(Y)^2)/T and k = (Sh_max^2 - Sh(Y)^2)/N."""
    k = (sh_max_sq - sh_y_sq) / N
    if k <= 0:
        raise NonPositiveKError(
            f"Sh_max^2={sh_max_sq:.6g} must exceed Sh(Y)^2={sh_y_sq:.6g}"
        )
    a = (1.0 + sh_y_sq) / T
    term1 = -(T - K) / 2.0 * math.log1p((a / (a + k)) * (W / T))
    term2 = -N / 2.0 * math.log1p(k / a)
    return term1 + term2


def q_scalar(W: float, sh_y_sq: float, sh_max_sq: float, T: int, K: int, N: int) -> float:
    return math.exp(log_q_scalar(W, sh_y_sq, sh_max_sq, T, K, N))


def _log_det(M: np.ndarray, what: str) -> float:
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0 or not np.isfinite(logdet):
        raise SingularCrossProductError(f"singular {what} cross-product")
    return float(logdet)


def marginal_likelihood(
    Y,
    X,
    restricted: bool,
    k: Optional[float] = None,
    a: Optional[float] = None,
) -> float:
    """Log marginal likelihood of the regression block X on factors Y.

    Unrestricted: (-N/2) log|Y'Y| - ((T-K)/2) log|S| + log Q with S the
    residual cross-product of the with-intercept regression and Q
    evaluated at this regression's W.  Restricted: same with the
    zero-intercept residual cross-product S_R and no Q term.  ``k`` and
    ``a`` must be supplied for the unrestricted case.
    """
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    T, K = Y.shape
    N = X.shape[1]
    if X.shape[0] != T:
        raise DataError("regressor and block sample lengths differ")
    if T <= K:
        raise DataError(f"T={T} must exceed K={K}")

    log_yty = _log_det(Y.T @ Y, "regressor")
    if restricted:
        coef, _, rank, _ = np.linalg.lstsq(Y, X, rcond=None)
        if rank < K:
            raise SingularCrossProductError("collinear regressors")
        resid = X - Y @ coef
        s_r = resid.T @ resid
        return -N / 2.0 * log_yty - (T - K) / 2.0 * _log_det(s_r, "restricted residual")

    if k is None or a is None:
        raise ValueError("unrestricted marginal likelihood needs k and a")
    Xi = np.column_stack([np.ones(T), Y])
    coef, _, rank, _ = np.linalg.lstsq(Xi, X, rcond=None)
    if rank < Xi.shape[1]:
        raise SingularCrossProductError("collinear regressors")
    resid = X - Xi @ coef
    s_u = resid.T @ resid
    result = grs_test(X, Y)
    W = grs_w(result)
    sh_y_sq = a * T - 1.0  # invert a = (1 + Sh^2)/T
    sh_max_sq = sh_y_sq + k * N
    log_q = log_q_scalar(W, sh_y_sq, sh_max_sq, T, K, N)
    return -N / 2.0 * log_yty - (T - K) / 2.0 * _log_det(s_u, "residual") + log_q


def _scan(
    factors: pd.DataFrame, params: BayesParams, prior_multiple: float
) -> list[ModelPosterior]:
    missing = [c for c in (params.market, *params.candidates) if c not in factors.columns]
    if missing:
        raise DataError(f"factor panel missing columns {missing}")
    if factors[[params.market, *params.candidates]].isna().any().any():
        raise DataError("factor panel has missing values")
    T = len(factors)
    if T < MIN_SCAN_MONTHS:
        raise DataError(f"scan needs >= {MIN_SCAN_MONTHS} months, got {T}")

    mkt = factors[[params.market]].to_numpy(dtype=float)
    sh_mkt_sq = max_sharpe_sq(mkt)
    sh_max_sq = prior_multiple**2 * sh_mkt_sq
    a = (1.0 + sh_mkt_sq) / T

    entries: list[ModelPosterior] = []
    first_error: Optional[NumericError] = None
    n = len(params.candidates)
    for r in range(1, n):  # non-empty proper subsets
        for subset in itertools.combinations(params.candidates, r):
            included = sorted(subset)
            excluded = sorted(set(params.candidates) - set(subset))
            key = "+".join([params.market] + included)
            try:
                k = (sh_max_sq - sh_mkt_sq) / len(included)
                log_u = marginal_likelihood(
                    mkt, factors[included].to_numpy(dtype=float),
                    restricted=False, k=k, a=a,
                )
                y2 = factors[[params.market] + included].to_numpy(dtype=float)
                log_r = marginal_likelihood(
                    y2, factors[excluded].to_numpy(dtype=float), restricted=True
                )
                entries.append(
                    ModelPosterior(key, tuple(included), log_u, log_r, log_u + log_r, 0.0)
                )
            except NumericError as exc:
                log.warning("model %s failed: %s", key, exc)
                if first_error is None:
                    first_error = exc
                entries.append(
                    ModelPosterior(key, tuple(included), np.nan, np.nan, np.nan, np.nan, str(exc))
                )

    ok = [e for e in entries if e.error is None]
    if not ok:
        raise first_error
    logs = np.array([e.log_ml for e in ok])
    shifted = np.exp(logs - logs.max())
    posts = shifted / shifted.sum()
    for e, p in zip(ok, posts):
        e.posterior = float(p)
    return entries


def model_scan(factors: pd.DataFrame, params: BayesParams) -> list[ModelPosterior]:
    """Posterior probability of every market-plus-subset factor model.

    With 6 candidates this scans the 2^6 - 2 = 62 non-empty proper
    subsets.  Numeric failures are attached to their entry rather than
    aborting the scan; posteriors over the successful models sum to 1.
    """
    return _scan(_window(factors, params), params, params.prior_multiple)


def _window(factors: pd.DataFrame, params: BayesParams) -> pd.DataFrame:
    out = factors
    if params.start is not None:
        out = out[out.index >= params.start]
    if params.end is not None:
        out = out[out.index <= params.end]
    return out


def cumulative_factor_prob(posteriors: Sequence[ModelPosterior]) -> dict[str, float]:
    """Per-candidate sum of the posteriors of all models containing it."""
    out: dict[str, float] = {}
    for e in posteriors:
        if e.error is not None:
            continue
        for f in e.factors:
            out[f] = out.get(f, 0.0) + e.posterior
    return out


def expanding_scan(
    factors: pd.DataFrame, params: BayesParams, month_grid: Sequence[str]
) -> pd.DataFrame:
    """Re-run the scan for every grid month on the window from the sample
    start through that month.  The final grid month reproduces the
    full-sample scan exactly."""
    window = _window(factors, params)
    rows = []
    for m in month_grid:
        sub = window[window.index <= m]
        for e in _scan(sub, params, params.prior_multiple):
            rows.append(
                {
                    "month": m,
                    "model": e.model_key,
                    "posterior": e.posterior,
                    "error": e.error or "",
                }
            )
    return pd.DataFrame(rows, columns=["month", "model", "posterior", "error"])


def prior_sensitivity(
    factors: pd.DataFrame,
    params: BayesParams,
    multiples: Sequence[float] = PRIOR_MULTIPLES,
    top: int = 5,
) -> pd.DataFrame:
    """Full-sample posteriors for several prior multiples.

    Rows are the union of each multiple's top models, columns one per
    multiple.  A multiple of 1.0 makes k non-positive for the market-only
    Sharpe bound and propagates NonPositiveKError.
    """
    window = _window(factors, params)
    by_mult = {}
    for mult in multiples:
        entries = _scan(window, params, mult)
        by_mult[mult] = {e.model_key: e.posterior for e in entries if e.error is None}
    keys: list[str] = []
    for mult in multiples:
        ranked = sorted(by_mult[mult].items(), key=lambda kv: -kv[1])[:top]
        for key, _ in ranked:
            if key not in keys:
                keys.append(key)
    table = pd.DataFrame(index=keys, columns=[str(m) for m in multiples], dtype=float)
    for mult in multiples:
        for key in keys:
            table.loc[key, str(mult)] = by_mult[mult].get(key, np.nan)
    return table
