"""Two-step cross-sectional risk-premium estimation.

First step (pipeline): firm-level rolling betas, aggregated to portfolio
exposures by the formation value weights and standardized per month.
Second step (core): month-by-month cross-sectional OLS of portfolio
returns on lagged exposures plus the value-weighted score characteristic;
premia are the time means of the monthly slopes with Newey-West t-stats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..errors import DataError
from ..portfolio import SortResult, sort_portfolios
from .linreg import (
    ZeroVarianceError,
    newey_west_cov,
    nw_lag_rule,
    ols,
    rolling_betas,
    standardize,
    with_intercept,
)


class InsufficientCrossSectionError(DataError):
    """Too few portfolios relative to cross-sectional regressors."""


@dataclass
class FmbResult:
    """gamma_means are monthly premia in the units of the input returns;
    mape is the time-mean of the cross-sectional mean absolute residual."""

    gamma_means: np.ndarray
    nw_t_stats: np.ndarray
    avg_r2_adj: float
    mape: float
    names: list[str] = field(default_factory=list)
    gammas: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    def premium(self, name: str) -> float:
        return float(self.gamma_means[self.names.index(name)])

    def t_stat(self, name: str) -> float:
        return float(self.nw_t_stats[self.names.index(name)])


def fama_macbeth(
    returns: np.ndarray,
    exposures: Optional[np.ndarray] = None,
    characteristic: Optional[np.ndarray] = None,
    nw_lag: Optional[int] = None,
    names: Optional[Sequence[str]] = None,
) -> FmbResult:
    """Cross-sectional regressions, one per month.

    ``returns`` is T x N; ``exposures`` T x N x K (already lagged by the
    caller); ``characteristic`` T x N.  Each month regresses the N returns
    on an intercept, the K exposures, and the characteristic.  Requires at
    least two more portfolios than regressors every month.
    """
    R = np.asarray(returns, dtype=float)
    T, N = R.shape
    blocks = []
    if exposures is not None:
        E = np.asarray(exposures, dtype=float)
        if E.ndim == 2:
            E = E[:, :, None]
        if E.shape[:2] != (T, N):
            raise DataError("exposures shape mismatch")
        blocks.append(E)
    if characteristic is not None:
        C = np.asarray(characteristic, dtype=float)
        if C.shape != (T, N):
            raise DataError("characteristic shape mismatch")
        blocks.append(C[:, :, None])
    K = sum(b.shape[2] for b in blocks)
    p = K + 1
    if N < p + 2:
        raise InsufficientCrossSectionError(
            f"{N} portfolios for {p} regressors; need at least {p + 2}"
        )

    gammas = np.empty((T, p))
    r2_adj = np.empty(T)
    abs_resid = np.empty(T)
    for t in range(T):
        cols = [b[t] for b in blocks]
        X = with_intercept(np.column_stack(cols)) if cols else np.ones((N, 1))
        fit = ols(R[t], X)
        gammas[t] = fit.coefficients
        r2_adj[t] = fit.r2_adj
        abs_resid[t] = np.abs(fit.residuals).mean()

    means = gammas.mean(axis=0)
    if nw_lag is None:
        nw_lag = nw_lag_rule(T)
    t_stats = np.empty(p)
    for j in range(p):
        centered = gammas[:, j] - means[j]
        s = float(newey_west_cov(centered, nw_lag)[0, 0])
        se = np.sqrt(s / T)
        t_stats[j] = means[j] / se if se > 0 else np.inf * np.sign(means[j])

    if names is None:
        names = ["const"] + [f"x{j}" for j in range(1, p)]
    return FmbResult(
        gamma_means=means,
        nw_t_stats=t_stats,
        avg_r2_adj=float(r2_adj.mean()),
        mape=float(abs_resid.mean()),
        names=list(names),
        gammas=gammas,
    )


def fama_macbeth_pipeline(
    return_panel: pd.DataFrame,
    score_panel: pd.DataFrame,
    factors: pd.DataFrame,
    factor_cols: Sequence[str],
    rf: pd.Series,
    n_portfolios: int = 20,
    beta_window: int = 24,
    frequency: str = "quarterly",
    nw_lag: Optional[int] = None,
    extra_portfolios: Optional[pd.DataFrame] = None,
) -> FmbResult:
    """Full two-step estimation on score-sorted portfolios.

    Builds ``n_portfolios`` value-weighted score-sorted portfolios,
    estimates their rolling factor betas, standardizes the betas across
    portfolios each month, lags everything one month, and runs the
    cross-sectional step with the portfolios' value-weighted scores as the
    characteristic (also standardized, so its premium reads as return per
    one standard deviation of score).  ``extra_portfolios`` (wide monthly
    excess returns) are appended as additional test assets with a NaN
    characteristic excluded from the score column.
    """
    sorted_res: SortResult = sort_portfolios(
        return_panel, score_panel, rf, q=n_portfolios, frequency=frequency
    )
    port = sorted_res.quantile_excess
    if extra_portfolios is not None:
        port = port.join(extra_portfolios, how="inner")
    months_idx = list(port.index)

    # portfolio exposures: rolling betas of each portfolio series
    betas = {}
    for col in port.columns:
        betas[col] = rolling_betas(port[col], factors.loc[months_idx, factor_cols], beta_window)

    # value-weighted score characteristic, forward-filled from formations
    vw_score = pd.DataFrame(index=months_idx, columns=port.columns, dtype=float)
    formation = {}
    for rec in sorted_res.membership:
        formation.setdefault(rec["quantile"], {})[rec["month"]] = rec["vw_score"]
    for k, series in formation.items():
        s = pd.Series(series).sort_index()
        vw_score[k] = s.reindex(months_idx).ffill()

    usable = [m for m in months_idx[1:] if m in betas[port.columns[0]].index]
    # lag exposures and characteristic one month relative to returns
    T = 0
    rows_R, rows_E, rows_C = [], [], []
    for m in usable:
        prev = months_idx[months_idx.index(m) - 1]
        if prev not in betas[port.columns[0]].index:
            continue
        exp_block = np.column_stack(
            [betas[col].loc[prev].to_numpy(dtype=float) for col in port.columns]
        ).T  # N x K
        try:
            exp_block = np.column_stack(
                [standardize(exp_block[:, j]) for j in range(exp_block.shape[1])]
            )
        except ZeroVarianceError:
            continue
        char = vw_score.loc[prev].to_numpy(dtype=float)
        if np.isnan(char).any():
            char_z = np.full(len(char), np.nan)
            valid = ~np.isnan(char)
            char_z[valid] = standardize(char[valid])
            char = np.where(valid, char_z, 0.0)
        else:
            char = standardize(char)
        rows_R.append(port.loc[m].to_numpy(dtype=float))
        rows_E.append(exp_block)
        rows_C.append(char)
        T += 1
    if T < beta_window:
        raise DataError(f"only {T} usable months after lagging")
    names = ["const"] + [f"beta_{c}" for c in factor_cols] + ["score"]
    return fama_macbeth(
        np.vstack(rows_R),
        np.stack(rows_E),
        np.vstack(rows_C),
        nw_lag=nw_lag,
        names=names,
    )
