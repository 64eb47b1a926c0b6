"""Cosine-similarity scoring against a reference corpus of
attack-technique descriptions, and aggregation into per-filing and
per-firm-month panels.

A paragraph's score is its maximum cosine similarity across the reference
vectors, clamped at zero; a filing's score is the mean over the top 1% of
its paragraph scores, which keeps the filing score inside [0, 1] and
driven by the handful of paragraphs most likely to discuss the topic.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from . import months as mo
from .errors import DataError, NumericError

TOP_FRACTION = 0.01


class ZeroVectorError(NumericError):
    """Cosine similarity is undefined for a zero vector."""


class EmptyFilingError(DataError):
    """A filing with no scored paragraphs cannot be scored."""


@dataclass(frozen=True)
class ReferenceDescription:
    tactic: str
    technique: str
    sub_technique: str
    doc_id: str


class ReferenceCorpus:
    """Reference description vectors, pre-normalized for scoring."""

    def __init__(self, labels: Sequence[ReferenceDescription], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim != 2 or len(labels) != vectors.shape[0] or not len(labels):
            raise DataError("reference corpus must be non-empty with one vector per label")
        if not np.all(np.isfinite(vectors)):
            raise DataError("non-finite reference vector")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms == 0):
            raise ZeroVectorError("zero-norm reference vector")
        self.labels = list(labels)
        self.vectors = vectors
        self._unit = vectors / norms[:, None]

    def __len__(self) -> int:
        return len(self.labels)


def cosine_similarity(v1: np.ndarray, v2: np.ndarray) -> float:
    """v1.v2 / (|v1| |v2|); raises ZeroVectorError on a zero input."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    n1 = np.linalg.norm(v1)
    n2 = np.linalg.norm(v2)
    if n1 == 0 or n2 == 0:
        raise ZeroVectorError("cosine similarity of a zero vector")
    return float(v1 @ v2 / (n1 * n2))


def paragraph_score(
    pvec: np.ndarray, refs: ReferenceCorpus
) -> tuple[float, ReferenceDescription]:
    """Max cosine similarity over the references, clamped at zero.

    The argmax reference is returned for audit (which tactic the paragraph
    most resembles) even when the clamp binds.
    """
    pvec = np.asarray(pvec, dtype=float)
    norm = np.linalg.norm(pvec)
    if norm == 0:
        raise ZeroVectorError("cosine similarity of a zero vector")
    sims = refs._unit @ (pvec / norm)
    best = int(np.argmax(sims))
    return max(0.0, float(sims[best])), refs.labels[best]


def top_percentile_count(n_paragraphs: int) -> int:
    """Number of paragraphs in the top 1%: max(1, round(0.01 * P)), with
    banker's rounding on the product."""
    if n_paragraphs < 1:
        raise EmptyFilingError("no paragraphs")
    # Python round() is half-to-even
    return max(1, round(TOP_FRACTION * n_paragraphs))


@dataclass(frozen=True)
class FilingScore:
    cik: int
    filing_date: dt.date
    score: float
    n_paragraphs: int
    top_paragraph_ids: tuple[int, ...]
    item1a_share: float


@dataclass(frozen=True)
class ScoredParagraph:
    ordinal: int
    score: float
    source_section: str = "other"


def filing_score(
    paragraphs: Sequence[ScoredParagraph],
    cik: int = 0,
    filing_date: dt.date = dt.date.min,
) -> FilingScore:
    """Mean of the top-1% paragraph scores.

    Ties at the cutoff go to the earlier ordinal.  ``item1a_share`` is the
    fraction of the retained paragraphs tagged "item1a".
    """
    if not paragraphs:
        raise EmptyFilingError("no paragraphs")
    n = len(paragraphs)
    n_top = top_percentile_count(n)
    ranked = sorted(paragraphs, key=lambda p: (-p.score, p.ordinal))
    top = ranked[:n_top]
    score = float(np.mean([p.score for p in top]))
    share = sum(1 for p in top if p.source_section == "item1a") / n_top
    return FilingScore(
        cik=cik,
        filing_date=filing_date,
        score=score,
        n_paragraphs=n,
        top_paragraph_ids=tuple(p.ordinal for p in top),
        item1a_share=share,
    )


def long_run_score(score_history: Sequence[float]) -> float:
    """Expanding arithmetic mean through the latest observation."""
    if not score_history:
        raise DataError("empty score history")
    return float(np.mean(score_history))


@dataclass(frozen=True)
class FilingParagraphScores:
    """Scored paragraphs of one filing, kept per-section so panels can be
    rebuilt excluding the risk-factor section."""

    cik: int
    filing_date: dt.date
    paragraphs: tuple[ScoredParagraph, ...]


def build_score_panel(
    filings: Sequence[FilingParagraphScores],
    panel_months: Sequence[str],
    mode: str = "simple",
    section_filter: str = "all",
) -> pd.DataFrame:
    """Per-(cik, month) effective scores.

    Each month takes the most recent filing with filing_date on or before
    the month's end; firms with no filing yet are simply absent.  In
    ``long_run`` mode the effective score is the expanding mean of all the
    firm's filing scores through that filing.  ``exclude_item1a`` rebuilds
    every filing score from the paragraphs outside the risk-factor section.

    Returns a DataFrame with columns cik, month, score, filing_date, mode.
    """
    if mode not in ("simple", "long_run"):
        raise ValueError(f"unknown mode {mode!r}")
    if section_filter not in ("all", "exclude_item1a"):
        raise ValueError(f"unknown section_filter {section_filter!r}")

    per_firm: dict[int, list[tuple[dt.date, float]]] = {}
    seen: set[tuple[int, dt.date]] = set()
    for filing in filings:
        key = (filing.cik, filing.filing_date)
        if key in seen:
            raise DataError(f"duplicate filing for cik={filing.cik} {filing.filing_date}")
        seen.add(key)
        paragraphs = filing.paragraphs
        if section_filter == "exclude_item1a":
            paragraphs = tuple(
                p for p in paragraphs if p.source_section != "item1a"
            )
            if not paragraphs:
                continue
        fs = filing_score(paragraphs, filing.cik, filing.filing_date)
        per_firm.setdefault(filing.cik, []).append((filing.filing_date, fs.score))

    rows = []
    for cik, history in sorted(per_firm.items()):
        history.sort()
        dates = [d for d, _ in history]
        scores = [s for _, s in history]
        cummeans = np.cumsum(scores) / np.arange(1, len(scores) + 1)
        for month in panel_months:
            end = mo.month_end(month)
            # most recent filing on or before the month end
            idx = np.searchsorted(dates, end, side="right") - 1
            if idx < 0:
                continue
            value = scores[idx] if mode == "simple" else float(cummeans[idx])
            rows.append(
                {
                    "cik": cik,
                    "month": month,
                    "score": value,
                    "filing_date": dates[idx].isoformat(),
                    "mode": mode,
                }
            )
    return pd.DataFrame(rows, columns=["cik", "month", "score", "filing_date", "mode"])


def write_score_panel(panel: pd.DataFrame, path: Path | str) -> None:
    panel.to_csv(path, index=False)


def read_score_panel(path: Path | str) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"cik": int, "month": str, "mode": str})


# --------------------------------------------------------------------------
# reference corpus IO
# --------------------------------------------------------------------------


def load_reference_descriptions(
    ref_dir: Path | str,
) -> list[tuple[ReferenceDescription, str]]:
    """Read the reference directory: a ``manifest.csv`` with columns
    tactic, technique, sub_technique, filename plus one plain-text
    description file per row."""
    ref_dir = Path(ref_dir)
    manifest = ref_dir / "manifest.csv"
    if not manifest.exists():
        raise DataError(f"missing reference manifest {manifest}")
    out = []
    with open(manifest, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            path = ref_dir / row["filename"]
            label = ReferenceDescription(
                tactic=row["tactic"],
                technique=row["technique"],
                sub_technique=row["sub_technique"],
                doc_id=f"ref:{Path(row['filename']).stem}",
            )
            out.append((label, path.read_text(encoding="utf-8")))
    if not out:
        raise DataError(f"empty reference manifest {manifest}")
    return out


def embed_references(
    model,
    descriptions: Iterable[tuple[ReferenceDescription, str]],
    stop_config,
    infer_epochs: Optional[int] = None,
    seed: Optional[int] = None,
) -> ReferenceCorpus:
    """Vectorize reference descriptions with a trained model.

    Descriptions that were part of the training corpus reuse their trained
    paragraph vectors; the rest are embedded by inference.
    """
    from .embed import infer_vector
    from .textprep import preprocess_reference

    labels, vecs = [], []
    for label, text in descriptions:
        para = preprocess_reference(text, stop_config, label.doc_id)
        if model.has_paragraph(para.key):
            vec = model.paragraph_vector(para.key)
        else:
            vec = infer_vector(model, para, infer_epochs=infer_epochs, seed=seed)
        labels.append(label)
        vecs.append(vec)
    return ReferenceCorpus(labels, np.vstack(vecs))
