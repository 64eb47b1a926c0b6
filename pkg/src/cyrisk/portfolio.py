"""Value-weighted quantile portfolio sorts, long-short spreads, double
sorts, and performance statistics on monthly panels.

Portfolios form at quarter-end rebalance dates from the scores known by
then and hold (with formation weights) through the months up to the next
rebalance, so a score never affects returns earned before it was
available.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from . import months as mo
from .errors import DataError, NumericError
from .panels import caps_wide, returns_wide


class TooFewFirmsError(DataError):
    """Fewer sortable firms than requested quantiles."""


class NoMembersError(DataError):
    """A portfolio-month with no members holding a return."""


class DateMismatchError(DataError):
    """Two monthly series do not share the same calendar."""


class InsufficientOverlapError(DataError):
    """Overlapping history shorter than the requested window."""


class ZeroVolatilityError(NumericError):
    """A ratio with zero volatility in the denominator and nonzero mean."""


def assign_quantiles(scores: Mapping, q: int) -> dict:
    """Assign firms to quantile buckets 1..q by score.

    Breakpoints sit at the i/q empirical quantiles of the universe; ties
    are resolved by stable firm-id order, so bucket sizes differ by at
    most one even when scores are all equal.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    n = len(scores)
    if n < q:
        raise TooFewFirmsError(f"{n} firms for {q} quantiles")
    ranked = sorted(scores.items(), key=lambda kv: (kv[1], str(kv[0])))
    return {firm: (rank * q) // n + 1 for rank, (firm, _) in enumerate(ranked)}


def rebalance_dates(calendar: Sequence[str], frequency: str = "quarterly") -> list[str]:
    """Last month of each calendar quarter (or year/month) within the
    window; a window ending mid-quarter rebalances at its final month."""
    cal = sorted(set(calendar))
    if not cal:
        return []
    if frequency == "monthly":
        return cal
    if frequency == "quarterly":
        keyfun = mo.quarter_of
    elif frequency == "annual":
        keyfun = lambda m: mo.quarter_of(m)[0]
    else:
        raise ValueError(f"unknown frequency {frequency!r}")
    last: dict = {}
    for m in cal:
        last[keyfun(m)] = m
    return sorted(last.values())


def vw_portfolio_returns(
    weights: Mapping, ret_wide: pd.DataFrame, months_held: Sequence[str]
) -> pd.Series:
    """Monthly portfolio returns under fixed formation weights.

    Each month uses the formation weights renormalized over the members
    that still have a return; a delisted member's weight is thereby
    redistributed pro-rata from its first missing month onward.
    """
    if not weights:
        raise NoMembersError("empty membership")
    ids = [i for i in weights if i in ret_wide.columns]
    if not ids:
        raise NoMembersError("no member has any return history")
    w = np.array([weights[i] for i in ids], dtype=float)
    block = ret_wide.reindex(months_held)[ids].to_numpy(dtype=float)
    out = np.empty(len(months_held))
    for k in range(len(months_held)):
        row = block[k]
        alive = ~np.isnan(row)
        wsum = w[alive].sum()
        if not alive.any() or wsum <= 0:
            raise NoMembersError(f"no live member in {months_held[k]}")
        out[k] = float((w[alive] / wsum) @ row[alive])
    return pd.Series(out, index=list(months_held))


def long_short(high: pd.Series, low: pd.Series) -> pd.Series:
    """Elementwise H - L; the calendars must match exactly."""
    if list(high.index) != list(low.index):
        raise DateMismatchError("long and short series calendars differ")
    return high - low


def winsorize(
    values: Sequence[float], lower_pct: float = 1, upper_pct: float = 99
) -> np.ndarray:
    """Clip below/above the given percentiles (linear interpolation)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise DataError("winsorize of empty input")
    lo, hi = np.percentile(arr, [lower_pct, upper_pct])
    return np.clip(arr, lo, hi)


def exclude_universe(panel: pd.DataFrame, exclusion: Iterable) -> pd.DataFrame:
    """Drop the listed firm ids from a long panel."""
    excl = set(exclusion)
    if not excl:
        return panel
    return panel[~panel["id"].isin(excl)].reset_index(drop=True)


def rolling_correlation(a: pd.Series, b: pd.Series, window: int = 24) -> pd.Series:
    """Pearson correlation over trailing windows of the common calendar."""
    common = a.index.intersection(b.index)
    if len(common) < window:
        raise InsufficientOverlapError(
            f"{len(common)} overlapping months < window {window}"
        )
    av = a.loc[common].astype(float)
    bv = b.loc[common].astype(float)
    corr = av.rolling(window).corr(bv)
    return corr.dropna()


@dataclass
class PerfStats:
    sharpe: float
    treynor: float
    sortino: float
    cumulative: pd.Series
    treynor_undefined: bool = False


def perf_stats(
    excess: pd.Series, market_excess: pd.Series, periods_per_year: int = 12
) -> PerfStats:
    """Annualized Sharpe, Treynor, and Sortino ratios plus the compounded
    cumulative return path.

    Sharpe = mean/SD * sqrt(12); Treynor = annualized mean over the CAPM
    beta against the market (flagged undefined when beta is ~0); Sortino
    divides by the below-zero semideviation scaled by sqrt(12).
    """
    if len(excess) < 12:
        raise DataError(f"need >= 12 months, got {len(excess)}")
    if list(excess.index) != list(market_excess.index):
        raise DateMismatchError("portfolio and market calendars differ")
    x = excess.to_numpy(dtype=float)
    m = market_excess.to_numpy(dtype=float)
    mean = x.mean()
    sd = x.std(ddof=1)
    if sd == 0:
        if mean != 0:
            raise ZeroVolatilityError("zero volatility with nonzero mean")
        sharpe = 0.0
    else:
        sharpe = mean / sd * np.sqrt(periods_per_year)

    ann_mean = mean * periods_per_year
    mvar = m.var(ddof=1)
    if mvar == 0:
        beta = 0.0
    else:
        beta = float(np.cov(x, m, ddof=1)[0, 1] / mvar)
    treynor_undefined = abs(beta) < 1e-10
    treynor = float("nan") if treynor_undefined else ann_mean / beta

    downside = float(np.sqrt(np.mean(np.minimum(x, 0.0) ** 2)))
    if downside == 0:
        sortino = 0.0 if mean == 0 else float("inf") * np.sign(mean)
    else:
        sortino = ann_mean / (downside * np.sqrt(periods_per_year))

    cumulative = pd.Series(np.cumprod(1.0 + x) - 1.0, index=excess.index)
    return PerfStats(float(sharpe), treynor, float(sortino), cumulative, treynor_undefined)


# --------------------------------------------------------------------------
# sort pipeline
# --------------------------------------------------------------------------


@dataclass
class SortResult:
    """Quantile portfolio series plus formation bookkeeping.

    ``quantile_excess`` has one column per bucket label (1..q) of monthly
    excess returns; ``membership`` holds one record per formation bucket
    (month, quantile, members, weights, value-weighted score).
    """

    quantile_excess: pd.DataFrame
    long_short: pd.Series
    avg_firm_count: dict[int, float]
    avg_score: dict[int, float]
    membership: list[dict] = field(default_factory=list)
    q: int = 5


def _score_lookup(score_panel: pd.DataFrame) -> dict[str, dict]:
    by_month: dict[str, dict] = {}
    for row in score_panel.itertuples(index=False):
        by_month.setdefault(row.month, {})[row.cik] = row.score
    return by_month


def sort_portfolios(
    return_panel: pd.DataFrame,
    score_panel: pd.DataFrame,
    rf: pd.Series,
    q: int = 5,
    frequency: str = "quarterly",
    exclusions: Optional[Iterable] = None,
    start: Optional[str] = None,
    end: Optional[str] = None,
) -> SortResult:
    """Quantile sort on the score panel, value-weighted and rebalanced at
    quarter ends.

    Formation at rebalance month m uses the scores and market caps known
    at m; the resulting weights earn the returns of the months after m up
    to the next rebalance.  Excess returns subtract the riskfree series.
    """
    panel = return_panel
    excluded = sorted(set(exclusions)) if exclusions else []
    if excluded:
        panel = exclude_universe(panel, excluded)
    ret_w = returns_wide(panel)
    cap_w = caps_wide(panel)
    months_all = [m for m in ret_w.index]
    if start:
        months_all = [m for m in months_all if m >= start]
    if end:
        months_all = [m for m in months_all if m <= end]
    if not months_all:
        raise DataError("empty sample window")
    rebal = rebalance_dates(months_all, frequency)
    scores_by_month = _score_lookup(score_panel)

    bucket_series: dict[int, list[pd.Series]] = {k: [] for k in range(1, q + 1)}
    membership: list[dict] = []
    counts: dict[int, list[int]] = {k: [] for k in range(1, q + 1)}
    vw_scores: dict[int, list[float]] = {k: [] for k in range(1, q + 1)}

    for i, m in enumerate(rebal):
        nxt = rebal[i + 1] if i + 1 < len(rebal) else None
        held = [h for h in months_all if h > m and (nxt is None or h <= nxt)]
        month_scores = scores_by_month.get(m, {})
        caps = cap_w.loc[m].dropna() if m in cap_w.index else pd.Series(dtype=float)
        universe = {
            firm: month_scores[firm]
            for firm in caps.index
            if firm in month_scores and caps[firm] > 0
        }
        labels = assign_quantiles(universe, q)
        for k in range(1, q + 1):
            members = sorted((f for f, lab in labels.items() if lab == k), key=str)
            total_cap = float(sum(caps[f] for f in members))
            weights = {f: float(caps[f]) / total_cap for f in members}
            vw_score = float(sum(weights[f] * universe[f] for f in members))
            counts[k].append(len(members))
            vw_scores[k].append(vw_score)
            membership.append(
                {
                    "month": m,
                    "quantile": k,
                    "members": [str(f) for f in members],
                    "weights": [weights[f] for f in members],
                    "vw_score": vw_score,
                    "excluded": [str(f) for f in excluded],
                }
            )
            if held:
                raw = vw_portfolio_returns(weights, ret_w, held)
                bucket_series[k].append(raw - rf.reindex(raw.index).to_numpy(dtype=float))

    if not any(bucket_series[k] for k in bucket_series):
        raise DataError("no holding months after the first rebalance")
    quantile_excess = pd.DataFrame(
        {k: pd.concat(bucket_series[k]) for k in range(1, q + 1)}
    )
    spread = long_short(quantile_excess[q], quantile_excess[1])
    return SortResult(
        quantile_excess=quantile_excess,
        long_short=spread,
        avg_firm_count={k: float(np.mean(counts[k])) for k in counts},
        avg_score={k: float(np.mean(vw_scores[k])) for k in vw_scores},
        membership=membership,
        q=q,
    )


def double_sort(
    return_panel: pd.DataFrame,
    first_char: pd.DataFrame,
    score_panel: pd.DataFrame,
    rf: pd.Series,
    q1: int = 5,
    q2: int = 5,
    frequency: str = "quarterly",
) -> tuple[pd.DataFrame, list[str]]:
    """Sequential (conditional) double sort: quantiles on the first
    characteristic, then score quantiles within each bucket.

    Returns the q1 x q2 grid of mean monthly excess returns plus warnings
    for buckets dropped for having fewer than q2 firms (their cells are
    NaN).  ``first_char`` is a long panel with columns id, month, value.
    """
    ret_w = returns_wide(return_panel)
    cap_w = caps_wide(return_panel)
    months_all = list(ret_w.index)
    rebal = rebalance_dates(months_all, frequency)
    scores_by_month = _score_lookup(score_panel)
    char_by_month: dict[str, dict] = {}
    for row in first_char.itertuples(index=False):
        char_by_month.setdefault(row.month, {})[row.id] = row.value

    cells: dict[tuple[int, int], list[pd.Series]] = {
        (i, j): [] for i in range(1, q1 + 1) for j in range(1, q2 + 1)
    }
    warnings: list[str] = []
    for i, m in enumerate(rebal):
        nxt = rebal[i + 1] if i + 1 < len(rebal) else None
        held = [h for h in months_all if h > m and (nxt is None or h <= nxt)]
        if not held:
            continue
        month_scores = scores_by_month.get(m, {})
        month_char = char_by_month.get(m, {})
        caps = cap_w.loc[m].dropna() if m in cap_w.index else pd.Series(dtype=float)
        universe = [
            f
            for f in caps.index
            if f in month_scores and f in month_char and caps[f] > 0
        ]
        first_labels = assign_quantiles({f: month_char[f] for f in universe}, q1)
        for b1 in range(1, q1 + 1):
            bucket = [f for f in universe if first_labels[f] == b1]
            if len(bucket) < q2:
                warnings.append(
                    f"{m}: bucket {b1} has {len(bucket)} firms < {q2}; dropped"
                )
                continue
            second_labels = assign_quantiles({f: month_scores[f] for f in bucket}, q2)
            for b2 in range(1, q2 + 1):
                members = [f for f in bucket if second_labels[f] == b2]
                total_cap = float(sum(caps[f] for f in members))
                weights = {f: float(caps[f]) / total_cap for f in members}
                raw = vw_portfolio_returns(weights, ret_w, held)
                cells[(b1, b2)].append(
                    raw - rf.reindex(raw.index).to_numpy(dtype=float)
                )

    grid = pd.DataFrame(
        index=[f"Q{i}" for i in range(1, q1 + 1)],
        columns=[f"Q{j}" for j in range(1, q2 + 1)],
        dtype=float,
    )
    for (b1, b2), chunks in cells.items():
        if chunks:
            grid.loc[f"Q{b1}", f"Q{b2}"] = float(pd.concat(chunks).mean())
    return grid, warnings


def write_membership(membership: Iterable[dict], path: Path | str) -> None:
    """Membership ledger as JSON-lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in membership:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
