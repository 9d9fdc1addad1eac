"""Entity, sentence and document encoders that make up the mention featurizer.

Every encoder has a batched kernel working on padded `B x n x d` arrays with boolean
masks, plus a backward function accumulating parameter gradients. The single-mention
functions at the bottom of the module run the same kernels on a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import BoolArray, FloatArray
from .utils import uniform


@dataclass
class AttentionParams:
    """Bilinear attention `score_i = h_i^T W_a f_e`; `W_a` is (2H x d_word)."""

    W_a: FloatArray

    @classmethod
    def init(
        cls,
        hidden_size: int,
        word_dim: int,
        rng: np.random.Generator,
        scale: float,
        dtype: type[np.floating] = np.float64,
    ) -> AttentionParams:
        return cls(uniform(rng, (hidden_size, word_dim), scale, dtype))

    def zeros_like(self) -> AttentionParams:
        return AttentionParams(np.zeros_like(self.W_a))

    def named(self, prefix: str = "attention") -> dict[str, FloatArray]:
        return {f"{prefix}.W_a": self.W_a}


@dataclass
class DocMLPParams:
    """`g_d = relu(W_d1 tanh(W_d2 v))`: `W_d2` is (hidden x d_doc) and is applied first,
    `W_d1` is (d_doc x hidden)."""

    W_d1: FloatArray
    W_d2: FloatArray

    def __post_init__(self) -> None:
        if self.W_d1.shape[::-1] != self.W_d2.shape:
            raise ValueError(
                f"Inconsistent document MLP shapes: W_d1 {self.W_d1.shape}, W_d2 {self.W_d2.shape}"
            )

    @property
    def doc_dim(self) -> int:
        return int(self.W_d2.shape[1])

    @classmethod
    def init(
        cls,
        doc_dim: int,
        hidden: int,
        rng: np.random.Generator,
        scale: float,
        dtype: type[np.floating] = np.float64,
    ) -> DocMLPParams:
        W_d2 = uniform(rng, (hidden, doc_dim), scale, dtype)
        W_d1 = uniform(rng, (doc_dim, hidden), scale, dtype)
        return cls(W_d1=W_d1, W_d2=W_d2)

    def zeros_like(self) -> DocMLPParams:
        return DocMLPParams(np.zeros_like(self.W_d1), np.zeros_like(self.W_d2))

    def named(self, prefix: str = "document") -> dict[str, FloatArray]:
        return {f"{prefix}.W_d1": self.W_d1, f"{prefix}.W_d2": self.W_d2}


@dataclass(frozen=True)
class FeatureVector:
    """The classifier input of one mention, kept in its three parts."""

    f_e: FloatArray
    g_s: FloatArray
    g_d: FloatArray

    @property
    def concat(self) -> FloatArray:
        return np.concatenate([self.f_e, self.g_s, self.g_d])

    def __len__(self) -> int:
        return len(self.f_e) + len(self.g_s) + len(self.g_d)


# --- entity encoder ---------------------------------------------------------------------


def entity_mean_batch(x: FloatArray, span_mask: BoolArray) -> FloatArray:
    """Mean of the token vectors selected by `span_mask` (B x n), per batch row."""
    counts = span_mask.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("Cannot encode an empty mention")
    total = np.where(span_mask[:, :, None], x, 0.0).sum(axis=1)
    return (total / counts[:, None]).astype(x.dtype, copy=False)


def entity_mean_backward(d_f: FloatArray, span_mask: BoolArray) -> FloatArray:
    counts = span_mask.sum(axis=1)
    return np.where(span_mask[:, :, None], (d_f / counts[:, None])[:, None, :], 0.0)


# --- attention --------------------------------------------------------------------------


@dataclass
class AttentionCache:
    hidden: FloatArray
    f_e: FloatArray
    u: FloatArray
    weights: FloatArray


def masked_softmax(scores: FloatArray, mask: BoolArray) -> FloatArray:
    """Row-wise softmax over the unmasked entries, with max subtraction. Masked entries
    get weight 0; every row needs at least one unmasked entry."""
    shifted = np.where(mask, scores, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def attention_batch(
    hidden: FloatArray, f_e: FloatArray, mask: BoolArray, params: AttentionParams
) -> tuple[FloatArray, AttentionCache]:
    """Attended context `g_s` (B x 2H) for hidden states (B x n x 2H) and entity vectors
    (B x d). The weights are in the returned cache."""
    if hidden.shape[-1] != params.W_a.shape[0] or f_e.shape[-1] != params.W_a.shape[1]:
        raise ValueError(
            f"Attention shape mismatch: hidden {hidden.shape}, f_e {f_e.shape}, "
            f"W_a {params.W_a.shape}"
        )
    u = f_e @ params.W_a.T
    scores = np.einsum("bnh,bh->bn", hidden, u)
    weights = masked_softmax(scores, mask)
    g_s = np.einsum("bn,bnh->bh", weights, hidden)
    return g_s, AttentionCache(hidden, f_e, u, weights)


def attention_backward(
    d_g: FloatArray, cache: AttentionCache, params: AttentionParams, grads: AttentionParams
) -> tuple[FloatArray, FloatArray]:
    """Returns the gradients with respect to the hidden states and the entity vectors."""
    a = cache.weights
    d_hidden = a[:, :, None] * d_g[:, None, :]
    d_a = np.einsum("bnh,bh->bn", cache.hidden, d_g)
    d_scores = a * (d_a - (a * d_a).sum(axis=1, keepdims=True))
    d_hidden += d_scores[:, :, None] * cache.u[:, None, :]
    d_u = np.einsum("bn,bnh->bh", d_scores, cache.hidden)
    grads.W_a += d_u.T @ cache.f_e
    return d_hidden, d_u @ params.W_a


# --- document encoder -------------------------------------------------------------------


@dataclass
class DocMLPCache:
    v: FloatArray
    t: FloatArray
    z: FloatArray


def document_batch(v: FloatArray, params: DocMLPParams) -> tuple[FloatArray, DocMLPCache]:
    if v.shape[-1] != params.doc_dim:
        raise ValueError(f"Document vector size {v.shape[-1]} != {params.doc_dim}")
    t = np.tanh(v @ params.W_d2.T)
    z = t @ params.W_d1.T
    return np.maximum(z, 0.0), DocMLPCache(v, t, z)


def document_backward(
    d_g: FloatArray, cache: DocMLPCache, params: DocMLPParams, grads: DocMLPParams
) -> None:
    # document vectors are fixed inputs, so no input gradient is returned
    d_z = np.where(cache.z > 0.0, d_g, 0.0)
    grads.W_d1 += d_z.T @ cache.t
    d_pre = (d_z @ params.W_d1) * (1.0 - cache.t**2)
    grads.W_d2 += d_pre.T @ cache.v


# --- single-mention API -----------------------------------------------------------------


def encode_entity(vectors: FloatArray) -> FloatArray:
    """Average of the mention token vectors (k x d)."""
    if vectors.ndim != 2 or len(vectors) == 0:
        raise ValueError(f"Cannot encode an empty mention (shape {vectors.shape})")
    return entity_mean_batch(vectors[None], np.ones((1, len(vectors)), dtype=bool))[0]


def attention_weights(hidden: FloatArray, f_e: FloatArray, params: AttentionParams) -> FloatArray:
    """Softmax over `i` of `h_i^T W_a f_e` for hidden states (n x 2H)."""
    if hidden.ndim != 2 or len(hidden) == 0:
        raise ValueError(f"Expected a non-empty sequence of hidden states, got {hidden.shape}")
    mask = np.ones((1, len(hidden)), dtype=bool)
    _, cache = attention_batch(hidden[None], f_e[None], mask, params)
    return cache.weights[0]


def encode_sentence(hidden: FloatArray, weights: FloatArray) -> FloatArray:
    """`g_s = sum_i a_i h_i`."""
    if len(weights) != len(hidden):
        raise ValueError(f"{len(weights)} attention weights for {len(hidden)} hidden states")
    return np.einsum("n,nh->h", weights, hidden)


def encode_document(dm_vec: FloatArray, params: DocMLPParams) -> FloatArray:
    if dm_vec.ndim != 1:
        raise ValueError(f"Expected a single document vector, got shape {dm_vec.shape}")
    g_d, _ = document_batch(dm_vec[None], params)
    return g_d[0]
