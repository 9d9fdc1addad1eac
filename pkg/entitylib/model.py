"""The full typing model: word table, BiLSTM, attention, document MLP and classifier.

`forward` runs the featurizer and the classifier on a padded batch; `forward_backward`
adds the manual backward pass and returns gradients keyed by parameter name.
"""

from __future__ import annotations

import logging
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .classifier import TypeEmbeddingMatrix, default_thresholds, nll_loss_from_logits
from .config import TrainConfig
from .corpus import Mention, TypeOntology, context_window, label_vector
from .embeddings import DocEmbeddingTable, WordEmbeddingTable
from .encoders import (
    AttentionCache,
    AttentionParams,
    DocMLPCache,
    DocMLPParams,
    FeatureVector,
    attention_backward,
    attention_batch,
    document_backward,
    document_batch,
    entity_mean_backward,
    entity_mean_batch,
)
from .lstm import BiLSTMCache, BiLSTMEncoder, bilstm_backward_batch, bilstm_forward_batch
from .types import BoolArray, FloatArray, IntArray, Mode, Precision
from .utils import sigmoid

LOGGER = logging.getLogger(__name__)

WORDS_PARAMETER = "embeddings.words"


@dataclass
class Model:
    """All parameters of the typing model plus the decision thresholds.

    `word_matrix` holds the word vectors with one extra all-zero row at the end, used for
    tokens without a vector; `words` indexes its other rows."""

    ontology: TypeOntology
    words: WordEmbeddingTable
    word_matrix: FloatArray
    documents: DocEmbeddingTable
    encoder: BiLSTMEncoder
    attention: AttentionParams
    document: DocMLPParams
    classifier: TypeEmbeddingMatrix
    thresholds: FloatArray
    config: TrainConfig
    _missing_docs: set[str] = field(default_factory=set, repr=False, compare=False)
    _missing_lock: threading.Lock = field(
        default_factory=threading.Lock, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        d_word, d_doc = self.words.dim, self.document.doc_dim
        expected = {
            "word_matrix": ((len(self.words) + 1, d_word), self.word_matrix.shape),
            "encoder input": (d_word, self.encoder.input_size),
            "W_a": ((self.encoder.output_size, d_word), self.attention.W_a.shape),
            "classifier": (
                (d_word + self.encoder.output_size + d_doc, len(self.ontology)),
                self.classifier.W.shape,
            ),
            "thresholds": ((len(self.ontology),), self.thresholds.shape),
        }
        for name, (want, got) in expected.items():
            if want != got:
                raise ValueError(f"Inconsistent model: {name} has shape {got}, expected {want}")
        if self.documents.dim is not None and self.documents.dim != d_doc:
            raise ValueError(f"Document vectors of size {self.documents.dim} != MLP input {d_doc}")

    @property
    def dtype(self) -> np.dtype:
        return self.classifier.W.dtype

    @property
    def feature_dim(self) -> int:
        return self.classifier.feature_dim

    @property
    def oov_row(self) -> int:
        return len(self.words)

    def named_parameters(self) -> dict[str, FloatArray]:
        """Trainable tensors by name (the word matrix only when fine-tuning)."""
        named = self.encoder.named_parameters()
        named |= self.attention.named()
        named |= self.document.named()
        named |= self.classifier.named()
        if self.config.fine_tune_embeddings:
            named[WORDS_PARAMETER] = self.word_matrix
        return named

    def token_ids(self, tokens: Sequence[str]) -> IntArray:
        rows = (self.words.row_of(tok) for tok in tokens)
        return np.array([self.oov_row if r is None else r for r in rows], dtype=np.intp)

    def unknown_tokens(self, mentions: Iterable[Mention]) -> Counter[str]:
        """Tokens inside the context windows of `mentions` that have no row in the word
        table and read the zero OOV row instead."""
        counts: Counter[str] = Counter()
        for m in mentions:
            tokens, _ = context_window(m, self.config.window)
            counts.update(tok for tok in tokens if self.words.row_of(tok) is None)
        return counts

    def doc_vector(self, mention: Mention) -> FloatArray:
        """The document vector of a mention; zeros without document context."""
        if not self.config.doc_context or mention.doc_id is None:
            return np.zeros(self.document.doc_dim, dtype=self.dtype)
        if mention.doc_id not in self.documents:
            with self._missing_lock:
                first = mention.doc_id not in self._missing_docs
                self._missing_docs.add(mention.doc_id)
            if first:
                LOGGER.warning(f"No vector for document '{mention.doc_id}', using zeros")
            return np.zeros(self.document.doc_dim, dtype=self.dtype)
        return self.documents.vector(mention.doc_id).astype(self.dtype)

    def astype(self, dtype: type[np.floating]) -> Model:
        """A deep copy of the model with every tensor converted to `dtype`."""
        word_matrix = self.word_matrix.astype(dtype)
        return Model(
            ontology=self.ontology,
            words=_table_view(self.words, word_matrix),
            word_matrix=word_matrix,
            documents=self.documents,
            encoder=self.encoder.astype(dtype),
            attention=AttentionParams(self.attention.W_a.astype(dtype)),
            document=DocMLPParams(
                self.document.W_d1.astype(dtype), self.document.W_d2.astype(dtype)
            ),
            classifier=TypeEmbeddingMatrix(self.classifier.W.astype(dtype)),
            thresholds=self.thresholds.copy(),
            config=replace(self.config, dtype=_precision_of(dtype)),
        )


def _precision_of(dtype: type[np.floating]) -> Precision:
    return "float64" if np.dtype(dtype) == np.float64 else "float32"


def _table_view(words: WordEmbeddingTable, word_matrix: FloatArray) -> WordEmbeddingTable:
    """A table sharing its vectors with all but the last (OOV) row of `word_matrix`."""
    return WordEmbeddingTable(
        dim=words.dim,
        tokens=words.tokens,
        vectors=word_matrix[:-1],
        oov_policy=words.oov_policy,
        trainable=words.trainable,
        index=words.index,
    )


def init_model(
    ontology: TypeOntology,
    words: WordEmbeddingTable,
    documents: DocEmbeddingTable | None,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> Model:
    """Builds a model whose trainable matrices are drawn from U(-init_range, init_range).
    The word vectors are copied from `words`; thresholds start at 0.5."""
    if len(ontology) == 0:
        raise ValueError("Cannot build a model for an empty ontology")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    dtype, scale = config.np_dtype, config.init_range
    documents = documents if documents is not None else DocEmbeddingTable()
    doc_dim = documents.dim if documents.dim is not None else config.doc_dim
    hidden = config.hidden_size
    word_matrix = np.vstack([words.vectors, np.zeros((1, words.dim))]).astype(dtype)
    encoder = BiLSTMEncoder.init(words.dim, hidden, config.num_layers, rng, scale, dtype)
    attention = AttentionParams.init(2 * hidden, words.dim, rng, scale, dtype)
    document = DocMLPParams.init(doc_dim, config.doc_hidden, rng, scale, dtype)
    feature_dim = words.dim + 2 * hidden + doc_dim
    classifier = TypeEmbeddingMatrix.init(feature_dim, len(ontology), rng, scale, dtype)
    LOGGER.info(
        f"Model: {feature_dim} features ({words.dim} entity + {2 * hidden} sentence + "
        f"{doc_dim} document), {len(ontology)} types, {config.num_layers} LSTM layers"
    )
    return Model(
        ontology=ontology,
        words=_table_view(words, word_matrix),
        word_matrix=word_matrix,
        documents=documents,
        encoder=encoder,
        attention=attention,
        document=document,
        classifier=classifier,
        thresholds=default_thresholds(len(ontology)),
        config=config,
    )


@dataclass
class Batch:
    """Padded model inputs for a list of mentions."""

    token_ids: IntArray
    mask: BoolArray
    span_mask: BoolArray
    doc_vectors: FloatArray
    labels: FloatArray

    def __len__(self) -> int:
        return len(self.token_ids)


def make_batch(mentions: Sequence[Mention], model: Model) -> Batch:
    """Windows, pads and indexes `mentions`; padding uses the OOV row."""
    if not mentions:
        raise ValueError("Empty batch")
    windows = [context_window(m, model.config.window) for m in mentions]
    length = max(len(tokens) for tokens, _ in windows)
    token_ids = np.full((len(mentions), length), model.oov_row, dtype=np.intp)
    mask = np.zeros((len(mentions), length), dtype=bool)
    span_mask = np.zeros_like(mask)
    for row, (tokens, (start, end)) in enumerate(windows):
        token_ids[row, : len(tokens)] = model.token_ids(tokens)
        mask[row, : len(tokens)] = True
        span_mask[row, start:end] = True
    doc_vectors = np.stack([model.doc_vector(m) for m in mentions])
    labels = np.stack([label_vector(m, model.ontology) for m in mentions])
    return Batch(token_ids, mask, span_mask, doc_vectors, labels)


@dataclass
class ForwardResult:
    logits: FloatArray
    probabilities: FloatArray
    features: FloatArray
    """Classifier inputs after dropout (B x F)."""
    f_e: FloatArray
    g_s: FloatArray
    g_d: FloatArray
    x: FloatArray
    lstm: BiLSTMCache
    attention: AttentionCache
    document: DocMLPCache
    dropout: tuple[FloatArray, FloatArray, FloatArray] | None = None

    @property
    def attention_weights(self) -> FloatArray:
        return self.attention.weights


def _dropout_mask(
    rng: np.random.Generator, shape: tuple[int, ...], rate: float, dtype: np.dtype
) -> FloatArray:
    return ((rng.random(shape) >= rate) / (1.0 - rate)).astype(dtype)


def forward(
    batch: Batch, model: Model, mode: Mode = "eval", rng: np.random.Generator | None = None
) -> ForwardResult:
    """Featurizes and classifies a batch. Train mode applies inverted dropout to the three
    feature parts; eval mode is deterministic."""
    x = model.word_matrix[batch.token_ids]
    hidden, lstm_cache = bilstm_forward_batch(x, batch.mask, model.encoder)
    f_e = entity_mean_batch(x, batch.span_mask)
    g_s, att_cache = attention_batch(hidden, f_e, batch.mask, model.attention)
    g_d, doc_cache = document_batch(batch.doc_vectors, model.document)
    dropout = None
    parts = [f_e, g_s, g_d]
    rate = model.config.dropout_rate
    if mode == "train" and rate > 0.0:
        if rng is None:
            raise ValueError("Train mode needs a random generator for dropout")
        dropout = (
            _dropout_mask(rng, f_e.shape, rate, model.dtype),
            _dropout_mask(rng, g_s.shape, rate, model.dtype),
            _dropout_mask(rng, g_d.shape, rate, model.dtype),
        )
        parts = [part * keep for part, keep in zip(parts, dropout)]
    features = np.concatenate(parts, axis=1)
    logits = features @ model.classifier.W
    return ForwardResult(
        logits=logits,
        probabilities=sigmoid(logits),
        features=features,
        f_e=f_e,
        g_s=g_s,
        g_d=g_d,
        x=x,
        lstm=lstm_cache,
        attention=att_cache,
        document=doc_cache,
        dropout=dropout,
    )


@dataclass
class Gradients:
    """Gradient accumulators shaped like the model parameters."""

    encoder: BiLSTMEncoder
    attention: AttentionParams
    document: DocMLPParams
    classifier: TypeEmbeddingMatrix
    words: FloatArray | None = None

    @classmethod
    def for_model(cls, model: Model) -> Gradients:
        return cls(
            encoder=model.encoder.zeros_like(),
            attention=model.attention.zeros_like(),
            document=model.document.zeros_like(),
            classifier=model.classifier.zeros_like(),
            words=(
                np.zeros_like(model.word_matrix) if model.config.fine_tune_embeddings else None
            ),
        )

    def named(self) -> dict[str, FloatArray]:
        named = self.encoder.named_parameters()
        named |= self.attention.named()
        named |= self.document.named()
        named |= self.classifier.named()
        if self.words is not None:
            named[WORDS_PARAMETER] = self.words
        return named


def backward(batch: Batch, result: ForwardResult, model: Model) -> Gradients:
    """Gradients of the mean batch loss with respect to every trainable parameter."""
    grads = Gradients.for_model(model)
    d_logits = ((result.probabilities - batch.labels) / len(batch)).astype(model.dtype)
    grads.classifier.W += result.features.T @ d_logits
    d_features = d_logits @ model.classifier.W.T
    d_word = model.words.dim
    d_hidden = model.encoder.output_size
    d_fe = d_features[:, :d_word]
    d_gs = d_features[:, d_word : d_word + d_hidden]
    d_gd = d_features[:, d_word + d_hidden :]
    if result.dropout is not None:
        keep_e, keep_s, keep_d = result.dropout
        d_fe, d_gs, d_gd = d_fe * keep_e, d_gs * keep_s, d_gd * keep_d

    document_backward(d_gd, result.document, model.document, grads.document)
    d_states, d_fe_att = attention_backward(
        d_gs, result.attention, model.attention, grads.attention
    )
    d_fe = d_fe + d_fe_att
    d_x = bilstm_backward_batch(d_states, result.lstm, model.encoder, grads.encoder)
    d_x = d_x + entity_mean_backward(d_fe, batch.span_mask)

    if grads.words is not None:
        np.add.at(grads.words, batch.token_ids[batch.mask], d_x[batch.mask])
        grads.words[model.oov_row] = 0.0
    return grads


def forward_backward(
    mentions: Sequence[Mention] | Batch,
    model: Model,
    mode: Mode = "train",
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, FloatArray]]:
    """Mean loss over the batch and the gradient of every trainable parameter, by name."""
    batch = mentions if isinstance(mentions, Batch) else make_batch(mentions, model)
    result = forward(batch, model, mode, rng)
    loss = nll_loss_from_logits(result.logits, batch.labels)
    return loss, backward(batch, result, model).named()


def featurize(model: Model, mention: Mention) -> FeatureVector:
    """Eval-mode feature vector `[f_e; g_s; g_d]` of one mention."""
    result = forward(make_batch([mention], model), model, "eval")
    return FeatureVector(result.f_e[0], result.g_s[0], result.g_d[0])


def predict_probabilities(
    model: Model,
    mentions: Sequence[Mention],
    batch_size: int | None = None,
    workers: int | None = None,
) -> FloatArray:
    """Eval-mode probabilities (N x T, float64) in input order. With `workers > 1`
    batches are scored on a thread pool."""
    batch_size = batch_size or model.config.eval_batch_size
    workers = workers or model.config.workers
    chunks = [mentions[i : i + batch_size] for i in range(0, len(mentions), batch_size)]
    if not chunks:
        return np.zeros((0, len(model.ontology)))

    def score(chunk: Sequence[Mention]) -> FloatArray:
        return forward(make_batch(chunk, model), model, "eval").probabilities

    if workers > 1 and len(chunks) > 1:
        LOGGER.debug(f"Scoring {len(chunks)} batches on {workers} threads")
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(score, chunks))
    else:
        parts = [score(chunk) for chunk in chunks]
    return np.vstack(parts).astype(np.float64)
