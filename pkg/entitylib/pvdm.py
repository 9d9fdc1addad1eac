"""Distributed-memory paragraph vectors (PV-DM) with negative sampling.

The input of each prediction is the average of the document vector and the vectors of the
context words around a centre word; the centre word is scored against `negative_samples`
noise words drawn from the unigram distribution raised to 0.75.

Documents are visited one at a time. The centre positions of a document are updated in
chunks of `POSITIONS_PER_UPDATE`, so one document-vector update sums a bounded number of
positions whatever the document length.
"""

from __future__ import annotations

import logging
import sys
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .corpus import DocumentRecord
from .embeddings import DocEmbeddingTable, EmbeddingError
from .types import FloatArray, IntArray

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

LOGGER = logging.getLogger(__name__)

NOISE_EXPONENT = 0.75
POSITIONS_PER_UPDATE = 8


@dataclass(frozen=True)
class PVDMConfig:
    """Hyper-parameters of PV-DM training and inference."""

    dim: int = 50
    context_size: int = 5
    negative_samples: int = 5
    epochs: int = 20
    lr: float = 0.025
    min_lr: float = 0.0001
    min_count: int = 2
    seed: int = 0
    infer_steps: int | None = None
    """Inference epochs for unseen documents (default: `epochs`)."""

    def __post_init__(self) -> None:
        if self.dim < 1 or self.context_size < 0 or self.negative_samples < 1:
            raise ValueError("PV-DM needs dim >= 1, context_size >= 0 and negative_samples >= 1")
        if self.epochs < 0 or self.min_count < 1:
            raise ValueError("PV-DM needs epochs >= 0 and min_count >= 1")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Self:
        known = {f.name for f in fields(cls)}
        if unknown := set(data) - known:
            raise ValueError(f"Unknown PV-DM option(s): {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class PVDMModel:
    """A trained PV-DM model: document vectors plus the input and output word matrices."""

    doc_ids: list[str]
    doc_vectors: FloatArray
    word_input: FloatArray
    word_output: FloatArray
    vocab: dict[str, int]
    noise: FloatArray
    config: PVDMConfig
    loss_log: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.config.dim

    def doc_table(self) -> DocEmbeddingTable:
        return DocEmbeddingTable(self.dim, list(self.doc_ids), self.doc_vectors.copy())

    def encode(self, tokens: Sequence[str]) -> IntArray:
        """Vocabulary ids of the in-vocabulary tokens (others are dropped)."""
        return np.array([self.vocab[t] for t in tokens if t in self.vocab], dtype=np.intp)


def _build_vocab(
    documents: Sequence[DocumentRecord], min_count: int
) -> tuple[dict[str, int], FloatArray]:
    """Vocabulary ids (by descending count, then token) and the cumulative noise distribution."""
    counts = Counter(tok for doc in documents for tok in doc.tokens)
    kept = sorted((t for t, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
    if not kept:
        raise EmbeddingError(f"Empty PV-DM vocabulary after min_count={min_count}")
    freqs = np.array([counts[tok] for tok in kept], dtype=np.float64) ** NOISE_EXPONENT
    return {tok: i for i, tok in enumerate(kept)}, np.cumsum(freqs / freqs.sum())


def _windows(ids: IntArray, context_size: int) -> tuple[IntArray, IntArray, FloatArray]:
    """Centre ids, context ids (`-1` for missing positions), and input counts per centre."""
    width = 2 * context_size + 1
    padded = np.concatenate([np.full(context_size, -1), ids, np.full(context_size, -1)])
    window = sliding_window_view(padded, width)
    context = np.delete(window, context_size, axis=1)
    counts = 1.0 + (context >= 0).sum(axis=1)
    return ids, context, counts


def _step(
    doc_vec: FloatArray,
    ids: IntArray,
    model: PVDMModel,
    lr: float,
    rng: np.random.Generator,
    update_words: bool,
) -> float:
    """One negative-sampling pass over every centre position of one document, in chunks of
    `POSITIONS_PER_UPDATE` consecutive positions. `doc_vec` is updated in place after each
    chunk. Returns the summed loss (each chunk scored before its own update)."""
    centres, context, counts = _windows(ids, model.config.context_size)
    mask = context >= 0
    noise = np.searchsorted(model.noise, rng.random((len(centres), model.config.negative_samples)))
    noise = np.minimum(noise, len(model.noise) - 1)
    targets = np.concatenate([centres[:, None], noise], axis=1)
    labels = np.zeros(targets.shape[1])
    labels[0] = 1.0

    loss = 0.0
    for start in range(0, len(centres), POSITIONS_PER_UPDATE):
        part = slice(start, start + POSITIONS_PER_UPDATE)
        ctx, ctx_mask, tgt = context[part], mask[part], targets[part]
        ctx_sum = np.where(ctx_mask[:, :, None], model.word_input[np.where(ctx_mask, ctx, 0)], 0.0)
        hidden = (doc_vec[None, :] + ctx_sum.sum(1)) / counts[part, None]
        out = model.word_output[tgt]
        scores = np.einsum("pd,pkd->pk", hidden, out)
        signed = np.where(labels == 1.0, scores, -scores)
        loss += float(np.logaddexp(0.0, -signed).sum())

        gain = (labels - 1.0 / (1.0 + np.exp(-scores))) * lr
        neu = np.einsum("pk,pkd->pd", gain, out) / counts[part, None]
        if update_words:
            np.add.at(model.word_output, tgt, gain[:, :, None] * hidden[:, None, :])
            rows = np.broadcast_to(neu[:, None, :], (*ctx.shape, neu.shape[1]))
            np.add.at(model.word_input, ctx[ctx_mask], rows[ctx_mask])
        doc_vec += neu.sum(axis=0)
    return loss


def _lr_at(config: PVDMConfig, epoch: int, total: int) -> float:
    return config.lr - (config.lr - config.min_lr) * epoch / max(1, total)


def _init_vectors(rng: np.random.Generator, n: int, dim: int) -> FloatArray:
    return (rng.random((n, dim)) - 0.5) / dim


def train_pvdm(
    documents: Sequence[DocumentRecord], config: PVDMConfig = PVDMConfig()
) -> PVDMModel:
    """Trains PV-DM on a document store and returns the model with its per-epoch mean loss.

    Args:
        documents: At least one document.
        config: Hyper-parameters (dimension 50, context 5, 5 negatives by default).
    """
    if not documents:
        raise EmbeddingError("PV-DM needs at least one document")
    rng = np.random.default_rng(config.seed)
    vocab, noise = _build_vocab(documents, config.min_count)
    model = PVDMModel(
        doc_ids=[doc.doc_id for doc in documents],
        doc_vectors=_init_vectors(rng, len(documents), config.dim),
        word_input=_init_vectors(rng, len(vocab), config.dim),
        word_output=np.zeros((len(vocab), config.dim)),
        vocab=vocab,
        noise=noise,
        config=config,
    )
    encoded = [model.encode(doc.tokens) for doc in documents]
    targets = sum(len(ids) for ids in encoded)
    LOGGER.info(
        f"PV-DM: {len(documents)} documents, {len(vocab)} words, {targets} targets per epoch"
    )
    for epoch in range(config.epochs):
        lr = _lr_at(config, epoch, config.epochs)
        total = 0.0
        for doc in rng.permutation(len(documents)):
            if len(encoded[doc]) == 0:
                continue
            total += _step(model.doc_vectors[doc], encoded[doc], model, lr, rng, True)
        model.loss_log.append(total / max(1, targets))
        LOGGER.debug(f"PV-DM epoch {epoch + 1}: loss {model.loss_log[-1]:.6f} (lr {lr:.5f})")
    if model.loss_log:
        LOGGER.info(f"PV-DM loss: {model.loss_log[0]:.4f} -> {model.loss_log[-1]:.4f}")
    return model


def infer_doc_vector(
    model: PVDMModel, tokens: Sequence[str], steps: int | None = None, seed: int | None = None
) -> FloatArray:
    """Infers a vector for an unseen document by gradient descent on the document vector
    alone, with both word matrices frozen. Deterministic for a fixed seed."""
    ids = model.encode(tokens)
    if len(ids) == 0:
        if tokens:
            LOGGER.warning("All tokens are out of the PV-DM vocabulary, returning a zero vector")
        return np.zeros(model.dim)
    rng = np.random.default_rng(model.config.seed if seed is None else seed)
    if steps is None:
        steps = model.config.infer_steps or model.config.epochs
    vec = _init_vectors(rng, 1, model.dim)[0]
    for step in range(steps):
        _step(vec, ids, model, _lr_at(model.config, step, steps), rng, False)
    return vec
