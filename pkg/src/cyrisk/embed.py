"""From-scratch paragraph-embedding engine.

Trains fixed-length vectors for token paragraphs with the distributed
bag-of-words objective (a distributed-memory variant is included): each
surviving target word pulls its paragraph vector toward the word's output
vector and away from sampled noise words via logistic-loss SGD.  Word
frequencies are subsampled, negatives drawn from a unigram^0.75 table, and
the learning rate decays linearly across epochs.

Single-threaded training with a fixed seed is bitwise reproducible.  With
``workers > 1`` updates are applied lock-free to the shared matrices;
races are permitted and convergence is statistical, so reproducibility is
not guaranteed there.
"""

from __future__ import annotations

import logging
import struct
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import DataError, NumericError
from .textprep import Paragraph

log = logging.getLogger(__name__)

MAGIC = b"PVEC"
FORMAT_VERSION = 1
NEGATIVE_TABLE_SIZE = 1_000_000
NEGATIVE_EXPONENT = 0.75
LR_FINAL_FRACTION = 0.01


class EmptyVocabError(DataError):
    """No token survives the min-count threshold."""


class NonFiniteLossError(NumericError):
    """Training diverged (NaN/inf epoch loss)."""


class NoKnownTokensError(DataError):
    """Every token of the paragraph is out of vocabulary."""


class BadMagicError(DataError):
    """Model file does not start with the PVEC magic bytes."""


class VersionMismatchError(DataError):
    """Model file format version is not supported."""


class TruncatedFileError(DataError):
    """Model file ends before all declared payload bytes."""


@dataclass(frozen=True)
class TrainParams:
    """Hyperparameters; defaults follow the best published specification
    (DBOW, 200 dims, window 15, min count 5, subsample 1e-5, 5 negatives,
    50 epochs)."""

    mode: str = "dbow"
    vector_size: int = 200
    window: int = 15
    min_count: int = 5
    subsample_t: float = 1e-5
    negative: int = 5
    epochs: int = 50
    initial_lr: float = 0.025
    seed: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.mode not in ("dbow", "dm"):
            raise ValueError(f"mode must be 'dbow' or 'dm', got {self.mode!r}")
        if self.vector_size <= 0:
            raise ValueError("vector_size must be positive")
        if self.negative < 1:
            raise ValueError("negative must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.subsample_t <= 0:
            raise ValueError("subsample_t must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class Vocab:
    """Retained tokens with exact corpus counts; ids dense in [0, V)."""

    token_ids: dict[str, int]
    counts: np.ndarray
    total_tokens: int
    min_count: int

    def __len__(self) -> int:
        return len(self.token_ids)

    def frequency_fraction(self, token_id: int) -> float:
        return self.counts[token_id] / self.total_tokens

    @property
    def id_to_token(self) -> list[str]:
        out = [""] * len(self.token_ids)
        for tok, i in self.token_ids.items():
            out[i] = tok
        return out


def build_vocab(corpus: Iterable[Paragraph], min_count: int) -> Vocab:
    """Count tokens across the corpus; drop those seen < min_count times.

    Ids are assigned by descending count (ties by token) so vocabulary
    construction is deterministic regardless of corpus iteration details.
    """
    counts: dict[str, int] = {}
    for para in corpus:
        for tok in para.tokens:
            counts[tok] = counts.get(tok, 0) + 1
    kept = {t: c for t, c in counts.items() if c >= min_count}
    if not kept:
        raise EmptyVocabError(
            f"no token reaches min_count={min_count} "
            f"({len(counts)} distinct tokens seen)"
        )
    ordered = sorted(kept.items(), key=lambda kv: (-kv[1], kv[0]))
    token_ids = {tok: i for i, (tok, _) in enumerate(ordered)}
    arr = np.array([c for _, c in ordered], dtype=np.int64)
    return Vocab(token_ids, arr, int(arr.sum()), min_count)


def keep_probability(freq_fraction: float, subsample_t: float) -> float:
    """Probability that an occurrence of a word survives subsampling:
    min(1, (sqrt(f/t) + 1) * t/f)."""
    if not 0 < freq_fraction <= 1:
        raise ValueError("freq_fraction must be in (0, 1]")
    ratio = freq_fraction / subsample_t
    return min(1.0, (np.sqrt(ratio) + 1.0) / ratio)


def negative_table(
    vocab: Vocab,
    exponent: float = NEGATIVE_EXPONENT,
    table_size: int = NEGATIVE_TABLE_SIZE,
) -> np.ndarray:
    """Unigram^exponent sampling table: uniform draws from the returned
    array sample token i with probability count_i^exponent / sum_j (up to
    discretization by table_size)."""
    weights = vocab.counts.astype(np.float64) ** exponent
    cum = np.cumsum(weights)
    cum /= cum[-1]
    positions = (np.arange(table_size) + 0.5) / table_size
    return np.searchsorted(cum, positions).astype(np.int32)


@dataclass
class EmbeddingModel:
    """Trained vocabulary plus the learned matrices.

    paragraph_matrix is D x P (one column per training paragraph),
    word_output_matrix D x V (negative-sampling output weights), and
    word_input_matrix D x V (present in distributed-memory mode only).
    """

    vocab: Vocab
    params: TrainParams
    paragraph_keys: list[str]
    paragraph_matrix: np.ndarray
    word_output_matrix: np.ndarray
    word_input_matrix: Optional[np.ndarray] = None
    epoch_losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        self._key_to_col = {k: i for i, k in enumerate(self.paragraph_keys)}

    def paragraph_vector(self, key: str) -> np.ndarray:
        return self.paragraph_matrix[:, self._key_to_col[key]]

    def has_paragraph(self, key: str) -> bool:
        return key in self._key_to_col


def _logistic_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    # -[l log sigma(s) + (1-l) log sigma(-s)] summed, in a form stable
    # for large |s|
    signed = np.where(labels > 0, -scores, scores)
    return float(np.logaddexp(0.0, signed).sum())


def negative_sampling_step(
    h: np.ndarray, out_vecs: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and gradients of one negative-sampling step.

    ``out_vecs`` holds one output vector per row; ``labels`` is 1 for the
    target word and 0 for noise words.  Returns (loss, grad_h, grad_out)
    where the gradients are of the summed logistic loss, so an SGD update
    is h -= lr * grad_h.
    """
    scores = out_vecs @ h
    probs = expit(scores)
    err = probs - labels
    loss = _logistic_loss(scores, labels)
    grad_h = err @ out_vecs
    grad_out = np.outer(err, h)
    return loss, grad_h, grad_out


def _epoch_lr(params: TrainParams, epoch: int) -> float:
    final = params.initial_lr * LR_FINAL_FRACTION
    if params.epochs == 1:
        return params.initial_lr
    frac = epoch / (params.epochs - 1)
    return params.initial_lr - (params.initial_lr - final) * frac


def _draw_negatives(
    rng: np.random.Generator, table: np.ndarray, n: int, target: int
) -> np.ndarray:
    """Noise word ids for one step: duplicates and target collisions are
    dropped rather than redrawn, keeping the step a pure function of the
    draw."""
    idx = rng.integers(0, len(table), size=n)
    negs = table[idx]
    negs = negs[negs != target]
    return np.unique(negs)


class _Trainer:
    """Shared state for one training run (or one inference)."""

    def __init__(self, params: TrainParams, vocab: Vocab, table: np.ndarray):
        self.params = params
        self.vocab = vocab
        self.table = table
        keep = np.array(
            [
                keep_probability(c / vocab.total_tokens, params.subsample_t)
                for c in vocab.counts
            ]
        )
        self.keep_prob = keep

    def survivors(self, ids: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if len(ids) == 0:
            return ids
        return ids[rng.random(len(ids)) < self.keep_prob[ids]]

    def dbow_paragraph(
        self,
        pvec: np.ndarray,
        ids: np.ndarray,
        out: np.ndarray,
        lr: float,
        rng: np.random.Generator,
        update_out: bool = True,
    ) -> tuple[float, int]:
        """One pass over a paragraph; mutates pvec (and out) in place.
        Returns (summed loss, number of target steps)."""
        params = self.params
        loss = 0.0
        targets = self.survivors(ids, rng)
        for target in targets:
            negs = _draw_negatives(rng, self.table, params.negative, target)
            wids = np.concatenate(([target], negs))
            labels = np.zeros(len(wids))
            labels[0] = 1.0
            vecs = out[:, wids].T
            step_loss, grad_h, grad_out = negative_sampling_step(pvec, vecs, labels)
            if update_out:
                out[:, wids] -= lr * grad_out.T
            pvec -= lr * grad_h
            loss += step_loss
        return loss, len(targets)

    def dm_paragraph(
        self,
        pvec: np.ndarray,
        ids: np.ndarray,
        win: np.ndarray,
        out: np.ndarray,
        lr: float,
        rng: np.random.Generator,
        update_words: bool = True,
    ) -> tuple[float, int]:
        """Distributed-memory pass: the mean of the paragraph vector and
        the window word input-vectors predicts each surviving center word."""
        params = self.params
        loss = 0.0
        seq = self.survivors(ids, rng)
        for i, target in enumerate(seq):
            lo = max(0, i - params.window)
            ctx = np.concatenate((seq[lo:i], seq[i + 1 : i + 1 + params.window]))
            m = 1 + len(ctx)
            h = pvec.copy()
            if len(ctx):
                h += win[:, ctx].sum(axis=1)
            h /= m
            negs = _draw_negatives(rng, self.table, params.negative, target)
            wids = np.concatenate(([target], negs))
            labels = np.zeros(len(wids))
            labels[0] = 1.0
            vecs = out[:, wids].T
            step_loss, grad_h, grad_out = negative_sampling_step(h, vecs, labels)
            if update_words:
                out[:, wids] -= lr * grad_out.T
            shared = (lr / m) * grad_h
            pvec -= shared
            if update_words and len(ctx):
                # subtract.at accumulates when a word repeats in the context
                np.subtract.at(win.T, ctx, shared)
            loss += step_loss
        return loss, len(seq)


def _paragraph_ids(corpus: Sequence[Paragraph], vocab: Vocab) -> list[np.ndarray]:
    mapped = []
    for para in corpus:
        ids = [vocab.token_ids[t] for t in para.tokens if t in vocab.token_ids]
        mapped.append(np.array(ids, dtype=np.int64))
    return mapped


def train(corpus: Sequence[Paragraph], params: TrainParams) -> EmbeddingModel:
    """Train paragraph vectors over the corpus.

    Raises EmptyVocabError when nothing survives the count threshold and
    NonFiniteLossError if an epoch loss diverges.
    """
    corpus = list(corpus)
    vocab = build_vocab(corpus, params.min_count)
    table = negative_table(vocab)
    trainer = _Trainer(params, vocab, table)
    mapped = _paragraph_ids(corpus, vocab)
    keys = [p.key for p in corpus]

    d, n_para, n_words = params.vector_size, len(corpus), len(vocab)
    rng = np.random.Generator(np.random.PCG64(params.seed))
    bound = 0.5 / d
    pmat = rng.uniform(-bound, bound, size=(d, n_para))
    wout = np.zeros((d, n_words))
    win = rng.uniform(-bound, bound, size=(d, n_words)) if params.mode == "dm" else None

    losses: list[float] = []
    for epoch in range(params.epochs):
        lr = _epoch_lr(params, epoch)
        started = time.perf_counter()
        if params.workers == 1:
            total_loss, total_steps = _run_epoch(
                trainer, mapped, pmat, wout, win, lr, rng, range(n_para)
            )
        else:
            total_loss, total_steps = _run_epoch_threaded(
                trainer, mapped, pmat, wout, win, lr, params, epoch
            )
        mean_loss = total_loss / max(1, total_steps)
        if not np.isfinite(mean_loss):
            raise NonFiniteLossError(
                f"divergence at epoch {epoch}: mean loss {mean_loss} (lr={lr:.5f})"
            )
        losses.append(mean_loss)
        rate = n_para / max(1e-9, time.perf_counter() - started)
        log.info(
            "epoch %d loss %.6f lr %.5f paragraphs/sec %.0f",
            epoch,
            mean_loss,
            lr,
            rate,
        )
    return EmbeddingModel(vocab, params, keys, pmat, wout, win, losses)


def _run_epoch(trainer, mapped, pmat, wout, win, lr, rng, indices):
    total_loss = 0.0
    total_steps = 0
    for j in indices:
        if trainer.params.mode == "dbow":
            l, s = trainer.dbow_paragraph(pmat[:, j], mapped[j], wout, lr, rng)
        else:
            l, s = trainer.dm_paragraph(pmat[:, j], mapped[j], win, wout, lr, rng)
        total_loss += l
        total_steps += s
    return total_loss, total_steps


def _run_epoch_threaded(trainer, mapped, pmat, wout, win, lr, params, epoch):
    """Hogwild-style epoch: workers stripe the corpus and update the shared
    matrices without locks."""
    results = [None] * params.workers

    def job(w: int) -> None:
        rng = np.random.Generator(np.random.PCG64((params.seed, epoch, w)))
        results[w] = _run_epoch(
            trainer, mapped, pmat, wout, win, lr, rng,
            range(w, len(mapped), params.workers),
        )

    threads = [threading.Thread(target=job, args=(w,)) for w in range(params.workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return (
        sum(r[0] for r in results),
        sum(r[1] for r in results),
    )


def infer_vector(
    model: EmbeddingModel,
    paragraph: Paragraph,
    infer_epochs: Optional[int] = None,
    seed: Optional[int] = None,
) -> np.ndarray:
    """Embed an unseen paragraph: a fresh random vector is optimized with
    the training objective while all word matrices stay frozen.

    Subsampling is disabled here so every in-vocabulary token contributes
    each epoch; the result is deterministic given the seed.  Raises
    NoKnownTokensError when every token is out of vocabulary.
    """
    params = model.params
    epochs = params.epochs if infer_epochs is None else infer_epochs
    ids = np.array(
        [model.vocab.token_ids[t] for t in paragraph.tokens if t in model.vocab.token_ids],
        dtype=np.int64,
    )
    if len(ids) == 0:
        raise NoKnownTokensError(f"paragraph {paragraph.key} has no known tokens")
    infer_params = replace(params, subsample_t=1.0, epochs=max(1, epochs))
    table = getattr(model, "_neg_table", None)
    if table is None:
        table = negative_table(model.vocab)
        model._neg_table = table
    trainer = _Trainer(infer_params, model.vocab, table)
    rng = np.random.Generator(np.random.PCG64(params.seed if seed is None else seed))
    d = params.vector_size
    h = rng.uniform(-0.5 / d, 0.5 / d, size=d)
    for epoch in range(infer_params.epochs):
        lr = _epoch_lr(infer_params, epoch)
        if params.mode == "dbow":
            trainer.dbow_paragraph(h, ids, model.word_output_matrix, lr, rng, update_out=False)
        else:
            trainer.dm_paragraph(
                h, ids, model.word_input_matrix, model.word_output_matrix,
                lr, rng, update_words=False,
            )
    return h


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFileError(f"wanted {n} bytes, got {len(data)}")
    return data


def _write_str(fh: BinaryIO, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_str(fh: BinaryIO) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    return _read_exact(fh, n).decode("utf-8")


def save_model(model: EmbeddingModel, path: Path | str) -> None:
    """Binary dump: PVEC magic, format version, dimensions, params, vocab,
    paragraph keys, then raw float64 matrix payloads."""
    p = model.params
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<B", 0 if p.mode == "dbow" else 1))
        fh.write(
            struct.pack(
                "<IQQ", p.vector_size, len(model.paragraph_keys), len(model.vocab)
            )
        )
        fh.write(
            struct.pack(
                "<IIdIIdqI",
                p.window,
                p.min_count,
                p.subsample_t,
                p.negative,
                p.epochs,
                p.initial_lr,
                p.seed,
                p.workers,
            )
        )
        fh.write(struct.pack("<Q", model.vocab.total_tokens))
        for tok, count in zip(model.vocab.id_to_token, model.vocab.counts):
            _write_str(fh, tok)
            fh.write(struct.pack("<q", int(count)))
        for key in model.paragraph_keys:
            _write_str(fh, key)
        fh.write(struct.pack("<I", len(model.epoch_losses)))
        for v in model.epoch_losses:
            fh.write(struct.pack("<d", v))
        fh.write(np.ascontiguousarray(model.paragraph_matrix).tobytes())
        fh.write(np.ascontiguousarray(model.word_output_matrix).tobytes())
        if p.mode == "dm":
            fh.write(np.ascontiguousarray(model.word_input_matrix).tobytes())


def load_model(path: Path | str) -> EmbeddingModel:
    """Inverse of save_model; round-trips bitwise.

    Raises BadMagicError, VersionMismatchError, or TruncatedFileError.
    """
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise BadMagicError(f"{path}: not a PVEC model file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != FORMAT_VERSION:
            raise VersionMismatchError(
                f"{path}: format version {version}, expected {FORMAT_VERSION}"
            )
        (mode_flag,) = struct.unpack("<B", _read_exact(fh, 1))
        d, n_para, n_words = struct.unpack(
            "<IQQ", _read_exact(fh, struct.calcsize("<IQQ"))
        )
        window, min_count, subsample_t, negative, epochs, initial_lr, seed, workers = (
            struct.unpack(
                "<IIdIIdqI", _read_exact(fh, struct.calcsize("<IIdIIdqI"))
            )
        )
        params = TrainParams(
            mode="dbow" if mode_flag == 0 else "dm",
            vector_size=d,
            window=window,
            min_count=min_count,
            subsample_t=subsample_t,
            negative=negative,
            epochs=epochs,
            initial_lr=initial_lr,
            seed=seed,
            workers=workers,
        )
        (total_tokens,) = struct.unpack("<Q", _read_exact(fh, 8))
        token_ids: dict[str, int] = {}
        counts = np.empty(n_words, dtype=np.int64)
        for i in range(n_words):
            tok = _read_str(fh)
            (counts[i],) = struct.unpack("<q", _read_exact(fh, 8))
            token_ids[tok] = i
        vocab = Vocab(token_ids, counts, total_tokens, min_count)
        keys = [_read_str(fh) for _ in range(n_para)]
        (n_losses,) = struct.unpack("<I", _read_exact(fh, 4))
        losses = [
            struct.unpack("<d", _read_exact(fh, 8))[0] for _ in range(n_losses)
        ]
        mat_bytes = d * n_para * 8
        pmat = np.frombuffer(_read_exact(fh, mat_bytes)).reshape(d, n_para).copy()
        wout = (
            np.frombuffer(_read_exact(fh, d * n_words * 8)).reshape(d, n_words).copy()
        )
        win = None
        if params.mode == "dm":
            win = (
                np.frombuffer(_read_exact(fh, d * n_words * 8))
                .reshape(d, n_words)
                .copy()
            )
    return EmbeddingModel(vocab, params, keys, pmat, wout, win, losses)
