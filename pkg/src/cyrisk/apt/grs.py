"""Joint test that the time-series pricing errors of a set of portfolios
are all zero against a set of traded factors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..errors import DataError, NumericError
from .linreg import f_cdf


class SingularCovarianceError(NumericError):
    """Residual or factor covariance matrix is not invertible."""


class TooShortSampleError(DataError):
    """Sample too short relative to portfolio and factor counts."""


@dataclass
class GrsResult:
    statistic: float
    p_value: float
    avg_r2: float
    n_assets: int
    n_periods: int
    n_factors: int
    alphas: np.ndarray


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, (pd.DataFrame, pd.Series)):
        x = x.to_numpy()
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    return x


def _solve_spd(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        sol = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(f"singular {what} covariance") from exc
    if not np.all(np.isfinite(sol)):
        raise SingularCovarianceError(f"non-finite solve against {what} covariance")
    return sol


def grs_test(portfolio_excess, factor_returns) -> GrsResult:
    """Test statistic

        (T/N) * ((T-N-K)/(T-K-1)) * a' S^-1 a / (1 + m' W^-1 m)

    with a the OLS intercepts, S the maximum-likelihood (divide-by-T)
    residual covariance, and m, W the factor sample mean and ML
    covariance.  The p-value comes from F(N, T-N-K).
    """
    R = _as_matrix(portfolio_excess)
    F = _as_matrix(factor_returns)
    T, N = R.shape
    K = F.shape[1]
    if F.shape[0] != T:
        raise DataError("portfolio and factor sample lengths differ")
    if T <= N + K:
        raise TooShortSampleError(f"T={T} must exceed N+K={N + K}")

    X = np.column_stack([np.ones(T), F])
    coef, _, rank, _ = np.linalg.lstsq(X, R, rcond=None)
    if rank < X.shape[1]:
        raise SingularCovarianceError("collinear factor set")
    resid = R - X @ coef
    alphas = coef[0]
    sigma = resid.T @ resid / T
    mu = F.mean(axis=0)
    omega = (F - mu).T @ (F - mu) / T

    # exact factor combinations leave zero residuals: the pricing errors
    # are identically zero and the statistic is 0 by construction
    if np.linalg.norm(resid) <= 1e-12 * max(1.0, np.linalg.norm(R)):
        quad_alpha = 0.0
    else:
        quad_alpha = float(alphas @ _solve_spd(sigma, alphas, "residual"))
    quad_mu = float(mu @ _solve_spd(omega, mu, "factor"))
    statistic = (T / N) * ((T - N - K) / (T - K - 1)) * quad_alpha / (1.0 + quad_mu)
    p_value = 1.0 - f_cdf(statistic, N, T - N - K)

    tss = ((R - R.mean(axis=0)) ** 2).sum(axis=0)
    rss = (resid**2).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(tss > 0, 1.0 - rss / tss, 1.0)
    return GrsResult(
        statistic=float(statistic),
        p_value=float(p_value),
        avg_r2=float(r2.mean()),
        n_assets=N,
        n_periods=T,
        n_factors=K,
        alphas=alphas,
    )


def grs_w(result: GrsResult) -> float:
    """The W scalar used by the Bayesian model comparison: the test
    statistic times NT/(T-N-K)."""
    N, T, K = result.n_assets, result.n_periods, result.n_factors
    return result.statistic * N * T / (T - N - K)
