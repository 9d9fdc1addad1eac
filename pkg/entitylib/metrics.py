"""Strict, loose-macro and loose-micro precision / recall / F1 over predicted type sets.

Degenerate cases: a per-instance macro term with an empty denominator is 1 when the other
set is empty too and 0 otherwise; a pooled micro ratio with a zero denominator is 1.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import AbstractSet, Any, Hashable, Sequence

from .utils import atomic_write

TypeSet = AbstractSet[Hashable]


@dataclass(frozen=True)
class ScoreTriple:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> ScoreTriple:
        denom = precision + recall
        f1 = 2.0 * precision * recall / denom if denom > 0.0 else 0.0
        return cls(precision, recall, f1)

    def to_dict(self) -> dict[str, float]:
        return {"p": self.precision, "r": self.recall, "f1": self.f1}


def _check(preds: Sequence[TypeSet], golds: Sequence[TypeSet]) -> int:
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions for {len(golds)} gold sets")
    if not preds:
        raise ValueError("Cannot score an empty set of instances")
    return len(preds)


def strict(preds: Sequence[TypeSet], golds: Sequence[TypeSet]) -> ScoreTriple:
    """Fraction of instances whose predicted set equals the gold set (P = R = F1)."""
    n = _check(preds, golds)
    value = sum(1 for p, g in zip(preds, golds) if set(p) == set(g)) / n
    return ScoreTriple(value, value, value)


def _ratio(numerator: int, denominator: int, other_empty: bool) -> float:
    if denominator == 0:
        return 1.0 if other_empty else 0.0
    return numerator / denominator


def loose_macro(preds: Sequence[TypeSet], golds: Sequence[TypeSet]) -> ScoreTriple:
    n = _check(preds, golds)
    precisions, recalls = [], []
    for pred, gold in zip(preds, golds):
        common = len(set(pred) & set(gold))
        precisions.append(_ratio(common, len(pred), not gold))
        recalls.append(_ratio(common, len(gold), not pred))
    return ScoreTriple.from_pr(math.fsum(precisions) / n, math.fsum(recalls) / n)


def loose_micro(preds: Sequence[TypeSet], golds: Sequence[TypeSet]) -> ScoreTriple:
    _check(preds, golds)
    common = sum(len(set(p) & set(g)) for p, g in zip(preds, golds))
    predicted = sum(len(p) for p in preds)
    gold = sum(len(g) for g in golds)
    precision = common / predicted if predicted else 1.0
    recall = common / gold if gold else 1.0
    return ScoreTriple.from_pr(precision, recall)


@dataclass(frozen=True)
class EvaluationReport:
    strict: ScoreTriple
    loose_macro: ScoreTriple
    loose_micro: ScoreTriple
    n: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "strict": self.strict.to_dict(),
            "loose_macro": self.loose_macro.to_dict(),
            "loose_micro": self.loose_micro.to_dict(),
            "n": self.n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


def evaluate(preds: Sequence[TypeSet], golds: Sequence[TypeSet]) -> EvaluationReport:
    return EvaluationReport(
        strict=strict(preds, golds),
        loose_macro=loose_macro(preds, golds),
        loose_micro=loose_micro(preds, golds),
        n=len(preds),
    )


@dataclass(frozen=True)
class TypeCounts:
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0


def per_type_counts(
    preds: Sequence[TypeSet], golds: Sequence[TypeSet]
) -> dict[Hashable, TypeCounts]:
    """True positive, false positive and false negative counts for every type seen in
    either the predictions or the gold sets."""
    _check(preds, golds)
    tp: Counter[Hashable] = Counter()
    fp: Counter[Hashable] = Counter()
    fn: Counter[Hashable] = Counter()
    for pred, gold in zip(preds, golds):
        tp.update(set(pred) & set(gold))
        fp.update(set(pred) - set(gold))
        fn.update(set(gold) - set(pred))
    types = sorted(set(tp) | set(fp) | set(fn), key=str)
    return {t: TypeCounts(tp[t], fp[t], fn[t]) for t in types}


def write_per_type_tsv(path: str | Path, counts: dict[Hashable, TypeCounts]) -> None:
    with atomic_write(path) as file:
        file.write("type\ttp\tfp\tfn\n")
        for type_, c in counts.items():
            file.write(f"{type_}\t{c.true_positives}\t{c.false_positives}\t{c.false_negatives}\n")
