"""Month arithmetic on ``YYYY-MM`` labels.

Monthly panels throughout the library key observations by a plain
``YYYY-MM`` string, which sorts correctly as text and round-trips through
CSV without timezone baggage.  These helpers convert between that label
and a flat integer index (months since year 0) for arithmetic.
"""

from __future__ import annotations

import calendar
import datetime as dt
import re

_LABEL_RE = re.compile(r"^(\d{4})-(\d{2})$")


def to_index(label: str) -> int:
    """``"2009-03"`` -> flat month index. Raises ValueError on bad input."""
    m = _LABEL_RE.match(label)
    if not m:
        raise ValueError(f"not a YYYY-MM month label: {label!r}")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range in {label!r}")
    return year * 12 + (month - 1)


def to_label(index: int) -> str:
    year, month = divmod(index, 12)
    return f"{year:04d}-{month + 1:02d}"


def shift(label: str, months: int) -> str:
    return to_label(to_index(label) + months)


def month_end(label: str) -> dt.date:
    """Last calendar day of the month."""
    idx = to_index(label)
    year, month = divmod(idx, 12)
    month += 1
    return dt.date(year, month, calendar.monthrange(year, month)[1])


def month_range(start: str, end: str) -> list[str]:
    """Inclusive list of labels from start to end."""
    lo, hi = to_index(start), to_index(end)
    if hi < lo:
        raise ValueError(f"month range end {end!r} before start {start!r}")
    return [to_label(i) for i in range(lo, hi + 1)]


def quarter_of(label: str) -> tuple[int, int]:
    idx = to_index(label)
    year, month = divmod(idx, 12)
    return year, month // 3


def date_to_month(d: dt.date) -> str:
    return f"{d.year:04d}-{d.month:02d}"
