"""Multi-label logistic head: per-type probabilities, the log-likelihood loss and
thresholded prediction with an optional argmax fallback."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import TypeOntology
from .types import PROBABILITY_EPSILON, BoolArray, FloatArray
from .utils import atomic_write, sigmoid, uniform

LOGGER = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


@dataclass
class TypeEmbeddingMatrix:
    """`W = [w_1 ... w_T]`, one column of length F per type (F x T). No bias term."""

    W: FloatArray

    @property
    def feature_dim(self) -> int:
        return int(self.W.shape[0])

    @property
    def num_types(self) -> int:
        return int(self.W.shape[1])

    @classmethod
    def init(
        cls,
        feature_dim: int,
        num_types: int,
        rng: np.random.Generator,
        scale: float,
        dtype: type[np.floating] = np.float64,
    ) -> TypeEmbeddingMatrix:
        if num_types < 1:
            raise ValueError("The classifier needs at least one type")
        return cls(uniform(rng, (feature_dim, num_types), scale, dtype))

    def zeros_like(self) -> TypeEmbeddingMatrix:
        return TypeEmbeddingMatrix(np.zeros_like(self.W))

    def named(self, prefix: str = "classifier") -> dict[str, FloatArray]:
        return {f"{prefix}.W": self.W}

    def column(self, type_id: int) -> FloatArray:
        return self.W[:, type_id]


@dataclass(frozen=True)
class PredictionResult:
    probabilities: FloatArray
    predicted: frozenset[int]
    fallback_used: bool = False


def default_thresholds(num_types: int) -> FloatArray:
    return np.full(num_types, DEFAULT_THRESHOLD)


def check_thresholds(thresholds: FloatArray, num_types: int) -> FloatArray:
    """Validates a threshold vector: length `num_types`, every entry strictly inside (0, 1)."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.shape != (num_types,):
        raise ValueError(f"Expected {num_types} thresholds, got shape {thresholds.shape}")
    if not np.all((thresholds > 0.0) & (thresholds < 1.0)):
        raise ValueError("Thresholds must lie strictly inside (0, 1)")
    return thresholds


def type_probabilities(phi: FloatArray, W: TypeEmbeddingMatrix) -> FloatArray:
    """`p_t = sigmoid(w_t^T phi)` for one feature vector (F) or a batch (B x F)."""
    if phi.shape[-1] != W.feature_dim:
        raise ValueError(f"Feature size {phi.shape[-1]} != classifier input {W.feature_dim}")
    if not np.all(np.isfinite(phi)):
        raise ValueError("Non-finite feature vector")
    return sigmoid(phi @ W.W)


def nll_loss(probabilities: FloatArray, labels: FloatArray) -> float:
    """Binary cross-entropy summed over types, averaged over the rows of a batch.
    Evaluated in float64 with probabilities clamped to [1e-12, 1 - 1e-12]."""
    if probabilities.shape != labels.shape:
        raise ValueError(f"Shape mismatch: {probabilities.shape} vs labels {labels.shape}")
    p = np.clip(probabilities.astype(np.float64), PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON)
    y = labels.astype(np.float64)
    per_type = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    if per_type.ndim == 1:
        return float(per_type.sum())
    return float(per_type.sum(axis=-1).mean())


def nll_loss_from_logits(logits: FloatArray, labels: FloatArray) -> float:
    """Same value as `nll_loss(sigmoid(logits), labels)`, evaluated from the logits so that
    it stays accurate where the sigmoid saturates."""
    z = logits.astype(np.float64)
    y = labels.astype(np.float64)
    per_type = np.logaddexp(0.0, z) - y * z
    per_type = np.clip(per_type, -np.log1p(-PROBABILITY_EPSILON), -np.log(PROBABILITY_EPSILON))
    if per_type.ndim == 1:
        return float(per_type.sum())
    return float(per_type.sum(axis=-1).mean())


def predict_types(
    probabilities: FloatArray, thresholds: FloatArray, fallback: bool = True
) -> PredictionResult:
    """`{t : p_t >= r_t}`; an empty set falls back to the argmax (lowest id on ties)."""
    if probabilities.shape != thresholds.shape:
        raise ValueError(f"{len(probabilities)} probabilities for {len(thresholds)} thresholds")
    predicted = frozenset(np.flatnonzero(probabilities >= thresholds).tolist())
    if not predicted and fallback:
        return PredictionResult(probabilities, frozenset([int(np.argmax(probabilities))]), True)
    return PredictionResult(probabilities, predicted)


def predict_matrix(
    probabilities: FloatArray, thresholds: FloatArray, fallback: bool
) -> BoolArray:
    """Vectorised `predict_types` over an N x T matrix; returns a boolean decision matrix."""
    decisions = probabilities >= thresholds[None, :]
    if fallback:
        empty = ~decisions.any(axis=1)
        decisions[empty, np.argmax(probabilities[empty], axis=1)] = True
    return decisions


def predict_batch(
    probabilities: FloatArray, thresholds: FloatArray, fallback: bool = True
) -> list[PredictionResult]:
    return [predict_types(row, thresholds, fallback) for row in probabilities]


def write_predictions(
    path: str | Path,
    results: Sequence[PredictionResult],
    golds: Iterable[Iterable[str]] | None,
    ontology: TypeOntology,
) -> None:
    """Writes one JSON object per mention with `probabilities`, `predicted` and `gold`
    (type paths, sorted). `gold` is empty when `golds` is None."""
    gold_rows = list(golds) if golds is not None else [[] for _ in results]
    if len(gold_rows) != len(results):
        raise ValueError(f"{len(results)} predictions for {len(gold_rows)} gold sets")
    with atomic_write(path) as file:
        for result, gold in zip(results, gold_rows):
            record = {
                "probabilities": [float(p) for p in result.probabilities],
                "predicted": sorted(ontology.types[t] for t in result.predicted),
                "gold": sorted(gold),
            }
            file.write(json.dumps(record) + "\n")
    LOGGER.info(f"Wrote {len(results)} predictions to {path}")
