"""OLS with Newey-West (Bartlett kernel) HAC errors, rolling betas,
alpha regressions, cross-sectional standardization, and the F
distribution function used for test p-values."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import betainc

from ..errors import DataError, NumericError
from ..portfolio import DateMismatchError


class RankDeficientError(NumericError):
    """Regressor matrix is not full column rank."""


class InsufficientHistoryError(DataError):
    """Fewer observations than the rolling window."""


class ZeroVarianceError(NumericError):
    """Cannot standardize a constant cross-section."""


@dataclass
class RegressionFit:
    """OLS output; ``covariance`` is OLS or HAC depending on the caller."""

    coefficients: np.ndarray
    residuals: np.ndarray
    covariance: np.ndarray
    t_stats: np.ndarray
    r2: float
    r2_adj: float
    names: list[str] = field(default_factory=list)

    @property
    def alpha(self) -> float:
        return float(self.coefficients[0])

    @property
    def alpha_t(self) -> float:
        return float(self.t_stats[0])


def with_intercept(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return np.column_stack([np.ones(X.shape[0]), X])


def _check_rank(X: np.ndarray) -> None:
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientError(
            f"regressor matrix rank < {X.shape[1]} columns"
        )


def _r_squared(y: np.ndarray, resid: np.ndarray) -> float:
    tss = float(((y - y.mean()) ** 2).sum())
    if tss == 0:
        return 1.0 if np.allclose(resid, 0) else 0.0
    return 1.0 - float((resid**2).sum()) / tss


def ols(y: np.ndarray, X: np.ndarray, names: Optional[Sequence[str]] = None) -> RegressionFit:
    """Least squares of y on X (X must already contain any intercept).

    Covariance and t-stats use the homoskedastic formula; see ols_hac for
    the Newey-West version.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    T, p = X.shape
    if T <= p:
        raise DataError(f"{T} observations for {p} regressors")
    _check_rank(X)
    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = T - p
    sigma2 = float(resid @ resid) / dof
    xtx_inv = np.linalg.inv(X.T @ X)
    cov = sigma2 * xtx_inv
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, np.inf * np.sign(coef))
    r2 = _r_squared(y, resid)
    r2_adj = 1.0 - (1.0 - r2) * (T - 1) / dof
    return RegressionFit(coef, resid, cov, t, r2, r2_adj, list(names or []))


def nw_lag_rule(T: int) -> int:
    """Automatic bandwidth: floor(4 * (T/100)^(2/9))."""
    if T < 2:
        raise ValueError("need T >= 2")
    return math.floor(4.0 * (T / 100.0) ** (2.0 / 9.0))


def newey_west_cov(moments: np.ndarray, lag: int) -> np.ndarray:
    """Bartlett-kernel long-run covariance of a moment series.

    S = Gamma_0 + sum_{l=1..L} (1 - l/(L+1)) (Gamma_l + Gamma_l') with
    Gamma_l = (1/T) sum_t m_t m_{t-l}'.  The series is used as given (no
    demeaning); center it first when estimating the variance of a mean.
    With lag 0 this is exactly the White covariance of the moments.
    """
    m = np.asarray(moments, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    T = m.shape[0]
    if not 0 <= lag < T:
        raise ValueError(f"lag must be in [0, T), got {lag} for T={T}")
    S = m.T @ m / T
    for l in range(1, lag + 1):
        gamma = m[l:].T @ m[:-l] / T
        S += (1.0 - l / (lag + 1.0)) * (gamma + gamma.T)
    return S


def hac_regression_cov(X: np.ndarray, resid: np.ndarray, lag: int) -> np.ndarray:
    """Newey-West parameter covariance: (X'X)^-1 (T S) (X'X)^-1 with S the
    Bartlett long-run covariance of the score series x_t * e_t."""
    X = np.asarray(X, dtype=float)
    resid = np.asarray(resid, dtype=float).ravel()
    S = newey_west_cov(X * resid[:, None], lag)
    xtx_inv = np.linalg.inv(X.T @ X)
    T = X.shape[0]
    return xtx_inv @ (T * S) @ xtx_inv


def ols_hac(
    y: np.ndarray,
    X: np.ndarray,
    lag: Optional[int] = None,
    names: Optional[Sequence[str]] = None,
) -> RegressionFit:
    """OLS point estimates with Newey-West covariance and t-stats."""
    fit = ols(y, X, names)
    T = len(fit.residuals)
    if lag is None:
        lag = nw_lag_rule(T)
    cov = hac_regression_cov(np.asarray(X, dtype=float), fit.residuals, lag)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, fit.coefficients / se, np.inf * np.sign(fit.coefficients))
    fit.covariance = cov
    fit.t_stats = t
    return fit


def alpha_regression(
    portfolio_excess: pd.Series,
    factors: pd.DataFrame,
    lag: Optional[int] = None,
) -> RegressionFit:
    """Time-series regression of a portfolio's excess returns on factor
    returns; the intercept is the pricing error (alpha), with HAC t-stats."""
    if list(portfolio_excess.index) != list(factors.index):
        raise DateMismatchError("portfolio and factor calendars differ")
    X = with_intercept(factors.to_numpy(dtype=float))
    names = ["alpha"] + list(factors.columns)
    return ols_hac(portfolio_excess.to_numpy(dtype=float), X, lag, names)


def rolling_betas(
    asset_excess: pd.Series, factors: pd.DataFrame, window: int = 24
) -> pd.DataFrame:
    """Trailing-window OLS betas, one row per month from the window'th
    observation onward."""
    if list(asset_excess.index) != list(factors.index):
        raise DateMismatchError("asset and factor calendars differ")
    T = len(asset_excess)
    if T < window:
        raise InsufficientHistoryError(f"{T} months < window {window}")
    y = asset_excess.to_numpy(dtype=float)
    F = factors.to_numpy(dtype=float)
    rows = []
    idx = []
    for t in range(window - 1, T):
        sl = slice(t - window + 1, t + 1)
        fit = ols(y[sl], with_intercept(F[sl]))
        rows.append(fit.coefficients[1:])
        idx.append(asset_excess.index[t])
    return pd.DataFrame(rows, index=idx, columns=list(factors.columns))


def standardize(values: Sequence[float]) -> np.ndarray:
    """Center and scale a cross-section to mean 0, SD 1 (population SD)."""
    arr = np.asarray(values, dtype=float)
    if len(np.unique(arr)) < 2:
        raise ZeroVarianceError("constant cross-section")
    sd = arr.std()
    return (arr - arr.mean()) / sd


def f_cdf(x: float, d1: float, d2: float) -> float:
    """CDF of the F(d1, d2) distribution via the regularized incomplete
    beta function I_{d1 x / (d1 x + d2)}(d1/2, d2/2)."""
    if d1 <= 0 or d2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0:
        return 0.0
    if np.isinf(x):
        return 1.0
    z = d1 * x / (d1 * x + d2)
    return float(betainc(d1 / 2.0, d2 / 2.0, z))
