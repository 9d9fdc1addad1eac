"""Inspection reports for a trained model: nearest types by cosine of their embeddings,
and the attention weights behind individual predictions."""

from __future__ import annotations

import html
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .classifier import TypeEmbeddingMatrix, predict_types
from .corpus import Mention, TypeOntology, context_window, gold_paths
from .model import Model, forward, make_batch
from .utils import atomic_write, format_float

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimilarityRow:
    type: str
    neighbors: list[tuple[str, float]] = field(default_factory=list)


def type_similarity(W: TypeEmbeddingMatrix, ontology: TypeOntology, k: int) -> list[SimilarityRow]:
    """The `k` nearest types of every type by cosine of the raw columns `w_t`, best first
    (ties by type id). Types with a zero-norm embedding get no neighbours and are never
    listed as a neighbour."""
    if k < 1:
        raise ValueError(f"k must be >= 1 (got {k})")
    if W.num_types != len(ontology):
        raise ValueError(f"{W.num_types} type embeddings for {len(ontology)} types")
    columns = W.W.astype(np.float64)
    norms = np.linalg.norm(columns, axis=0)
    valid = norms > 0.0
    safe = np.where(valid, norms, 1.0)
    gram = columns.T @ columns
    cosines = ((gram + gram.T) / 2.0) / np.outer(safe, safe)

    rows = []
    for t, type_path in enumerate(ontology):
        if not valid[t]:
            LOGGER.warning(f"Type '{type_path}' has a zero-norm embedding, no neighbours")
            rows.append(SimilarityRow(type_path))
            continue
        others = [u for u in range(len(ontology)) if u != t and valid[u]]
        ranked = sorted(others, key=lambda u: (-cosines[t, u], u))[:k]
        neighbors = [(ontology.types[u], float(cosines[t, u])) for u in ranked]
        rows.append(SimilarityRow(type_path, neighbors))
    return rows


def write_similarity_tsv(path: str | Path, rows: Sequence[SimilarityRow]) -> None:
    with atomic_write(path) as file:
        for row in rows:
            for neighbor, cosine in row.neighbors:
                file.write(f"{row.type}\t{neighbor}\t{format_float(cosine)}\n")


@dataclass(frozen=True)
class AttentionTrace:
    """Attention weights over the context window of one mention."""

    tokens: list[str]
    weights: list[float]
    span: tuple[int, int]
    predicted: list[str]
    gold: list[str]
    doc_id: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "tokens": self.tokens,
            "weights": self.weights,
            "mention": {"start": self.span[0], "end": self.span[1]},
            "predicted": self.predicted,
            "gold": self.gold,
            "doc_id": self.doc_id,
        }


def attention_trace(model: Model, mention: Mention) -> AttentionTrace:
    """Runs one eval-mode forward pass and records the attention weights it used."""
    tokens, span = context_window(mention, model.config.window)
    result = forward(make_batch([mention], model), model, "eval")
    weights = result.attention_weights[0, : len(tokens)]
    prediction = predict_types(result.probabilities[0], model.thresholds, model.config.fallback)
    return AttentionTrace(
        tokens=list(tokens),
        weights=[float(w) for w in weights],
        span=span,
        predicted=sorted(model.ontology.types[t] for t in prediction.predicted),
        gold=sorted(gold_paths(mention, model.ontology)),
        doc_id=mention.doc_id,
    )


def write_traces_jsonl(path: str | Path, traces: Sequence[AttentionTrace]) -> None:
    with atomic_write(path) as file:
        for trace in traces:
            file.write(json.dumps(trace.to_dict(), ensure_ascii=False) + "\n")


_HTML_HEAD = """<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>Attention traces</title>
<style>
body { font-family: sans-serif; }
.trace { margin: 1em 0; line-height: 2; }
.tok { padding: 2px 3px; margin: 0 1px; }
.mention { text-decoration: underline; font-weight: bold; }
.types { color: #555; font-size: 90%; }
</style></head><body>
"""


def render_traces_html(path: str | Path, traces: Sequence[AttentionTrace]) -> None:
    """Static HTML page: token background opacity follows its attention weight (scaled
    by the largest weight of the trace); mention tokens are underlined."""
    with atomic_write(path) as file:
        file.write(_HTML_HEAD)
        for trace in traces:
            top = max(trace.weights) if trace.weights else 1.0
            file.write('<div class="trace">')
            for pos, (token, weight) in enumerate(zip(trace.tokens, trace.weights)):
                css = "tok mention" if trace.span[0] <= pos < trace.span[1] else "tok"
                alpha = weight / top if top > 0 else 0.0
                file.write(
                    f'<span class="{css}" title="{weight:.4f}" '
                    f'style="background: rgba(255, 140, 0, {alpha:.3f})">'
                    f"{html.escape(token)}</span>"
                )
            file.write(
                f'<div class="types">predicted: {html.escape(", ".join(trace.predicted))}'
                f' | gold: {html.escape(", ".join(trace.gold))}</div></div>\n'
            )
        file.write("</body></html>\n")
    LOGGER.info(f"Rendered {len(traces)} attention trace(s) to {path}")
