"""Per-type decision thresholds tuned for strict F1 on a development set.

Coordinate ascent visits types by descending dev support (then id). For one type, strict
F1 only changes where the threshold crosses an observed probability, so the candidate set
(midpoints between consecutive distinct values, 0.5, and one value beyond each end of the
column) covers every prediction pattern that type can produce. A candidate replaces the
current value only when it strictly improves the score. Small problems are finished with
an exhaustive search over the joint candidate grid.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import AbstractSet, Sequence

import numpy as np

from .classifier import DEFAULT_THRESHOLD, check_thresholds, predict_matrix
from .corpus import TypeOntology
from .types import PROBABILITY_EPSILON, BoolArray, FloatArray
from .utils import atomic_write

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class TuningReport:
    thresholds: FloatArray
    dev_strict_before: float
    dev_strict_after: float
    passes: int
    joint_refined: bool = False

    def summary(self) -> str:
        return (
            f"dev strict F1 {self.dev_strict_before:.4f} -> {self.dev_strict_after:.4f} "
            f"({self.passes} pass(es){', joint refinement' if self.joint_refined else ''})"
        )


@dataclass
class _Problem:
    probabilities: FloatArray
    gold: BoolArray
    scoreable: BoolArray
    fallback: bool
    fallback_match: BoolArray

    def matches(self, thresholds: FloatArray) -> int:
        decisions = predict_matrix(self.probabilities, thresholds, self.fallback)
        return int(((decisions == self.gold).all(axis=1) & self.scoreable).sum())

    def coordinate_matches(
        self, thresholds: FloatArray, t: int, candidates: FloatArray
    ) -> FloatArray:
        """Exact-match counts for every candidate value of threshold `t`, others fixed."""
        decisions = self.probabilities >= thresholds[None, :]
        others = np.delete(decisions, t, axis=1)
        others_ok = (others == np.delete(self.gold, t, axis=1)).all(axis=1)
        others_any = others.any(axis=1)
        column = self.probabilities[:, t, None] >= candidates[None, :]
        match = others_ok[:, None] & (column == self.gold[:, t, None])
        if self.fallback:
            empty = ~others_any[:, None] & ~column
            match = np.where(empty, self.fallback_match[:, None], match)
        return (match & self.scoreable[:, None]).sum(axis=0)


def threshold_candidates(column: FloatArray) -> FloatArray:
    """Midpoints between consecutive distinct values, 0.5, and one value below the minimum
    and one above the maximum, all strictly inside (0, 1)."""
    distinct = np.unique(column)
    extra = [DEFAULT_THRESHOLD, distinct[0] / 2.0, (distinct[-1] + 1.0) / 2.0]
    values = np.concatenate([(distinct[:-1] + distinct[1:]) / 2.0, extra])
    return np.unique(np.clip(values, PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON))


def _pick(candidates: FloatArray, counts: FloatArray) -> tuple[float, int]:
    """Best candidate: highest count, then closest to 0.5, then larger."""
    best = int(counts.max())
    tied = candidates[counts == best]
    distance = np.abs(tied - DEFAULT_THRESHOLD)
    closest = tied[distance == distance.min()]
    return float(closest.max()), best


def _gold_matrix(gold: Sequence[AbstractSet[int]], num_types: int) -> BoolArray:
    matrix = np.zeros((len(gold), num_types), dtype=bool)
    for row, types in enumerate(gold):
        for t in types:
            if not 0 <= t < num_types:
                raise ValueError(f"Gold type id {t} out of range for {num_types} types")
            matrix[row, t] = True
    return matrix


def tune_thresholds(
    probabilities: FloatArray,
    gold: Sequence[AbstractSet[int]],
    fallback: bool = True,
    unmatchable: Sequence[bool] | None = None,
    initial: FloatArray | None = None,
    max_passes: int = 10,
    joint_search_limit: int = 4096,
) -> TuningReport:
    """Tunes one threshold per type to maximise dev strict F1.

    Args:
        probabilities: N x T dev probabilities.
        gold: Gold type-id sets, one per row.
        fallback: The argmax fallback setting used at prediction time.
        unmatchable: Rows that can never be an exact match (gold types outside the ontology).
        initial: Starting thresholds (default: 0.5 everywhere).
        max_passes: Maximum number of coordinate sweeps.
        joint_search_limit: Largest joint candidate grid searched exhaustively (0 disables).
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if probabilities.ndim != 2 or len(probabilities) == 0:
        raise ValueError("Threshold tuning needs a non-empty dev set")
    if len(gold) != len(probabilities):
        raise ValueError(f"{len(probabilities)} probability rows for {len(gold)} gold sets")
    n, num_types = probabilities.shape
    gold_matrix = _gold_matrix(gold, num_types)
    argmax_row = np.zeros_like(gold_matrix)
    argmax_row[np.arange(n), np.argmax(probabilities, axis=1)] = True
    scoreable = np.ones(n, dtype=bool)
    if unmatchable is not None:
        scoreable = ~np.asarray(unmatchable, dtype=bool)
    problem = _Problem(
        probabilities=probabilities,
        gold=gold_matrix,
        scoreable=scoreable,
        fallback=fallback,
        fallback_match=(argmax_row == gold_matrix).all(axis=1),
    )

    baseline = np.full(num_types, DEFAULT_THRESHOLD)
    before = problem.matches(baseline)
    thresholds = baseline.copy() if initial is None else check_thresholds(initial, num_types).copy()
    current = problem.matches(thresholds)
    candidates = [threshold_candidates(probabilities[:, t]) for t in range(num_types)]
    order = sorted(range(num_types), key=lambda t: (-int(gold_matrix[:, t].sum()), t))

    passes = 0
    while passes < max_passes:
        passes += 1
        improved = False
        for t in order:
            counts = problem.coordinate_matches(thresholds, t, candidates[t])
            value, best = _pick(candidates[t], counts)
            if best > current:
                thresholds[t] = value
                current = best
                improved = True
        LOGGER.debug(f"Threshold pass {passes}: {current}/{n} exact matches")
        if not improved:
            break

    joint = False
    grid = math.prod(len(c) for c in candidates)
    if 0 < grid <= joint_search_limit:
        for combo in itertools.product(*candidates):
            trial = np.array(combo)
            if (score := problem.matches(trial)) > current:
                thresholds, current, joint = trial, score, True
        if joint:
            LOGGER.info(f"Joint search over {grid} combinations improved to {current}/{n}")

    if current < before:
        LOGGER.warning("Tuned thresholds are worse than 0.5 everywhere, keeping 0.5")
        thresholds, current = baseline, before
    report = TuningReport(thresholds, before / n, current / n, passes, joint)
    LOGGER.info(f"Threshold tuning: {report.summary()}")
    return report


def write_thresholds(path: str | Path, thresholds: FloatArray, ontology: TypeOntology) -> None:
    """Writes `type-path threshold` lines, one per type in ontology order."""
    if len(thresholds) != len(ontology):
        raise ValueError(f"{len(thresholds)} thresholds for {len(ontology)} types")
    with atomic_write(path) as file:
        for type_path, value in zip(ontology, thresholds):
            file.write(f"{type_path} {float(value)!r}\n")
