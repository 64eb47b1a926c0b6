"""Turn extracted filing text into cleaned token paragraphs.

The pipeline mirrors how the reference descriptions are sized: sentences
are split while punctuation still exists, then lowercased, stripped of
punctuation/digits, filtered of stop-words and top-frequency English
words, and finally merged greedily into paragraphs of roughly
``target_len`` (default 40) tokens.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import DataError

DEFAULT_TARGET_LEN = 40
DEFAULT_COMMON_RANK_CUTOFF = 100


class EmptyDocumentError(DataError):
    """No tokens survive preprocessing."""


@dataclass(frozen=True)
class Paragraph:
    """A block of cleaned tokens from one document.

    ``source_section`` tags where the block came from ("item1a" for risk
    factor sections, "other" elsewhere); ordinals are unique per doc_id.
    """

    doc_id: str
    ordinal: int
    tokens: tuple[str, ...]
    source_section: str = "other"

    @property
    def key(self) -> str:
        return f"{self.doc_id}:{self.ordinal}"


@dataclass(frozen=True)
class StopConfig:
    """Token filter configuration.

    ``common_words`` must be frequency-ranked; only the top
    ``common_rank_cutoff`` entries are removed.
    """

    stopwords: frozenset[str]
    common_words: tuple[str, ...]
    common_rank_cutoff: int = DEFAULT_COMMON_RANK_CUTOFF

    def __post_init__(self):
        if self.common_rank_cutoff <= 0:
            raise ValueError("common_rank_cutoff must be positive")
        if "" in self.stopwords or "" in self.common_words:
            raise ValueError("empty string in word lists")

    @property
    def removed_common(self) -> frozenset[str]:
        return frozenset(self.common_words[: self.common_rank_cutoff])


def load_wordlist(path: Path | str) -> list[str]:
    """One word per line; blank lines ignored."""
    words = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            w = line.strip().lower()
            if w:
                words.append(w)
    return words


def default_stop_config(common_rank_cutoff: int = DEFAULT_COMMON_RANK_CUTOFF) -> StopConfig:
    """StopConfig backed by the word lists shipped with the package."""
    data = resources.files("cyrisk.data")
    stop = (data / "english_stopwords.txt").read_text(encoding="utf-8").split()
    common = (data / "english_common_words.txt").read_text(encoding="utf-8").split()
    return StopConfig(frozenset(stop), tuple(common), common_rank_cutoff)


def normalize(text: str) -> str:
    """Lowercase; replace punctuation, digits, and symbols by spaces;
    collapse whitespace.  Idempotent."""
    lowered = text.lower()
    chars = [c if c.isalpha() or c.isspace() else " " for c in lowered]
    return " ".join("".join(chars).split())


_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+(?=[A-Z“\"'(])")


def split_sentences(text: str) -> list[str]:
    """Split raw text on sentence-final punctuation followed by whitespace
    and a capital (or opening quote/paren).

    Must run before normalize(), which destroys the punctuation.  Known
    abbreviation false-splits are tolerated; the paragraph merge step
    absorbs them.
    """
    parts = _SENTENCE_BOUNDARY.split(text)
    return [p.strip() for p in parts if p.strip()]


def filter_tokens(tokens: Sequence[str], cfg: StopConfig) -> list[str]:
    """Drop stop-words, top-ranked common words, and single characters."""
    removed = cfg.removed_common
    return [
        t
        for t in tokens
        if len(t) > 1 and t not in cfg.stopwords and t not in removed
    ]


def merge_paragraphs(
    sentences: Sequence[Sequence[str]],
    doc_id: str,
    target_len: int = DEFAULT_TARGET_LEN,
    source_section: str = "other",
    start_ordinal: int = 0,
) -> list[Paragraph]:
    """Greedily merge filtered sentences into ~target_len-token paragraphs.

    Sentences accumulate until a paragraph first reaches target_len tokens.
    A short trailing paragraph (< target_len/4 tokens) is folded into the
    previous one rather than kept; a lone short paragraph is kept as-is.
    Token order and count are conserved.
    """
    if target_len <= 0:
        raise ValueError("target_len must be positive")
    blocks: list[list[str]] = []
    current: list[str] = []
    for sent in sentences:
        if not sent:
            continue
        current.extend(sent)
        if len(current) >= target_len:
            blocks.append(current)
            current = []
    if current:
        if blocks and len(current) < target_len / 4:
            blocks[-1].extend(current)
        else:
            blocks.append(current)
    if not blocks:
        raise EmptyDocumentError(f"no tokens in document {doc_id!r}")
    return [
        Paragraph(doc_id, start_ordinal + i, tuple(toks), source_section)
        for i, toks in enumerate(blocks)
    ]


def preprocess_reference(description_text: str, cfg: StopConfig, doc_id: str) -> Paragraph:
    """Clean one reference description into a single paragraph (no merging)."""
    tokens = filter_tokens(normalize(description_text).split(), cfg)
    if not tokens:
        raise EmptyDocumentError(f"reference {doc_id!r} empty after filtering")
    return Paragraph(doc_id, 0, tuple(tokens), "reference")


# --------------------------------------------------------------------------
# whole-document pipeline
# --------------------------------------------------------------------------

_ITEM_1A = re.compile(r"item\s*1\s*a\b", re.IGNORECASE)
_ITEM_1A_END = re.compile(r"item\s*(?:1\s*b|2)\b", re.IGNORECASE)


def split_item1a(raw_text: str) -> list[tuple[str, str]]:
    """Split raw text into (section_tag, text) runs.

    The risk-factor section starts at the first "item 1a" heading match and
    ends at the following "item 1b"/"item 2" match.  This is a heuristic;
    documents without the headings come back as a single "other" run.
    """
    m = _ITEM_1A.search(raw_text)
    if not m:
        return [("other", raw_text)]
    start = m.start()
    m_end = _ITEM_1A_END.search(raw_text, m.end())
    end = m_end.start() if m_end else len(raw_text)
    runs = []
    if raw_text[:start].strip():
        runs.append(("other", raw_text[:start]))
    runs.append(("item1a", raw_text[start:end]))
    if raw_text[end:].strip():
        runs.append(("other", raw_text[end:]))
    return runs


def document_paragraphs(
    doc_id: str,
    raw_text: str,
    cfg: StopConfig,
    target_len: int = DEFAULT_TARGET_LEN,
    tag_item1a: bool = True,
) -> list[Paragraph]:
    """Full preprocessing of one filing: section split, sentence split,
    normalize, filter, merge.  Sections are merged independently so item-1a
    paragraphs never mix with the rest."""
    runs = split_item1a(raw_text) if tag_item1a else [("other", raw_text)]
    paragraphs: list[Paragraph] = []
    ordinal = 0
    for section, text in runs:
        sentences = [
            filter_tokens(normalize(s).split(), cfg) for s in split_sentences(text)
        ]
        sentences = [s for s in sentences if s]
        if not sentences:
            continue
        block = merge_paragraphs(sentences, doc_id, target_len, section, ordinal)
        paragraphs.extend(block)
        ordinal += len(block)
    if not paragraphs:
        raise EmptyDocumentError(f"no tokens in document {doc_id!r}")
    return paragraphs


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def write_paragraphs(paragraphs: Iterable[Paragraph], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in paragraphs:
            fh.write(
                json.dumps(
                    {
                        "doc_id": p.doc_id,
                        "ordinal": p.ordinal,
                        "tokens": list(p.tokens),
                        "source_section": p.source_section,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_paragraphs(path: Path | str) -> list[Paragraph]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(
                Paragraph(
                    rec["doc_id"],
                    rec["ordinal"],
                    tuple(rec["tokens"]),
                    rec.get("source_section", "other"),
                )
            )
    return out
