"""CSV panel loaders.

Return panel: one row per (id, month) with columns ``id, month, ret,
mktcap``; returns are decimal (0.05 = 5%).  Factor panel: one row per
month with columns ``month, mkt_rf, smb, hml, mom, rmw, cma, rf`` quoted
in monthly percent (Kenneth-French style) and converted to decimals on
load.
"""

from __future__ import annotations

from pathlib import Path

import pandas as pd

from .errors import DataError

FACTOR_COLUMNS = ["mkt_rf", "smb", "hml", "mom", "rmw", "cma"]


def load_return_panel(path: Path | str) -> pd.DataFrame:
    panel = pd.read_csv(path, dtype={"month": str})
    required = {"id", "month", "ret", "mktcap"}
    missing = required - set(panel.columns)
    if missing:
        raise DataError(f"return panel missing columns {sorted(missing)}")
    if (panel["ret"] <= -1).any():
        raise DataError("return panel has returns <= -100%")
    caps = panel["mktcap"].dropna()
    if (caps <= 0).any():
        raise DataError("return panel has non-positive market caps")
    return panel


def load_factor_panel(path: Path | str) -> pd.DataFrame:
    """Factor returns in percent on disk, decimals in memory; indexed by
    month label."""
    raw = pd.read_csv(path, dtype={"month": str})
    if "month" not in raw.columns:
        raise DataError("factor panel missing 'month' column")
    raw = raw.set_index("month").sort_index()
    value_cols = [c for c in raw.columns]
    out = raw[value_cols].astype(float) / 100.0
    return out


def returns_wide(panel: pd.DataFrame) -> pd.DataFrame:
    """Pivot the long return panel to months x ids."""
    return panel.pivot(index="month", columns="id", values="ret").sort_index()


def caps_wide(panel: pd.DataFrame) -> pd.DataFrame:
    return panel.pivot(index="month", columns="id", values="mktcap").sort_index()
