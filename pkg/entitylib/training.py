"""Mini-batch training with Adam, model selection on dev strict F1, and a finite-difference
gradient check."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .classifier import default_thresholds, nll_loss_from_logits, predict_batch
from .config import TrainConfig
from .corpus import Dataset, Mention, gold_paths
from .embeddings import DocEmbeddingTable, WordEmbeddingTable
from .metrics import EvaluationReport, evaluate
from .model import (
    WORDS_PARAMETER,
    Model,
    forward,
    forward_backward,
    init_model,
    make_batch,
    predict_probabilities,
)
from .optim import AdamHyper, AdamState, adam_update
from .thresholds import TuningReport, tune_thresholds
from .types import BoolArray, FloatArray
from .utils import atomic_write

LOGGER = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "train_loss", "dev_strict", "dev_macro", "dev_micro")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    dev_strict: float
    dev_macro: float
    dev_micro: float

    def tsv_row(self) -> str:
        return (
            f"{self.epoch}\t{self.train_loss:.6f}\t{self.dev_strict:.6f}\t"
            f"{self.dev_macro:.6f}\t{self.dev_micro:.6f}"
        )


@dataclass
class TrainingResult:
    model: Model
    log: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    tuning: TuningReport | None = None


def write_training_log(path: str | Path, records: Sequence[EpochRecord]) -> None:
    """Writes the training log as TSV with a header row."""
    with atomic_write(path) as file:
        file.write("\t".join(LOG_COLUMNS) + "\n")
        for record in records:
            file.write(record.tsv_row() + "\n")


def score_mentions(
    model: Model,
    mentions: Sequence[Mention],
    thresholds: FloatArray | None = None,
    fallback: bool | None = None,
    probabilities: FloatArray | None = None,
) -> EvaluationReport:
    """Strict / macro / micro scores of the model on `mentions` (type paths are compared,
    so gold types outside the ontology count as misses)."""
    if probabilities is None:
        probabilities = predict_probabilities(model, mentions)
    thresholds = model.thresholds if thresholds is None else thresholds
    fallback = model.config.fallback if fallback is None else fallback
    results = predict_batch(probabilities, thresholds, fallback)
    preds = [{model.ontology.types[t] for t in r.predicted} for r in results]
    golds = [gold_paths(m, model.ontology) for m in mentions]
    return evaluate(preds, golds)


def tune_model_thresholds(
    model: Model,
    dev: Sequence[Mention],
    probabilities: FloatArray | None = None,
    **options: Any,
) -> TuningReport:
    """Tunes the thresholds of `model` on `dev` (with its fallback setting) and stores them.
    `options` are passed on to `tune_thresholds`."""
    if probabilities is None:
        probabilities = predict_probabilities(model, dev)
    report = tune_thresholds(
        probabilities,
        [m.gold_types for m in dev],
        fallback=model.config.fallback,
        unmatchable=[not m.scoreable for m in dev],
        **options,
    )
    model.thresholds = report.thresholds
    return report


def train_loop(
    dataset: Dataset,
    words: WordEmbeddingTable,
    config: TrainConfig,
    documents: DocEmbeddingTable | None = None,
    log_path: str | Path | None = None,
    threshold_options: Mapping[str, Any] | None = None,
) -> TrainingResult:
    """Trains a model on `dataset.train`, keeping the parameters with the best dev strict F1
    at thresholds 0.5. Stops after `max_epochs`, or once `patience` epochs pass without
    improvement. Thresholds are tuned on dev afterwards when `config.tune_thresholds` is set.
    """
    if not dataset.train or not dataset.dev:
        raise ValueError("Training needs non-empty train and dev splits")
    rng = np.random.default_rng(config.seed)
    words = words.restrict(dataset.vocabulary())
    LOGGER.info(f"Using {len(words)} word vectors covering the corpus vocabulary")
    model = init_model(dataset.ontology, words, documents, config, rng)
    params = model.named_parameters()
    adam = AdamState.for_params(params)
    hyper = AdamHyper(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    baseline = default_thresholds(len(dataset.ontology))

    result = TrainingResult(model)
    best_params: dict[str, FloatArray] = {}
    best_f1, stale = -1.0, 0
    train = dataset.train
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(train), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            loss, grads = forward_backward(batch, model, "train", rng)
            adam_update(params, grads, adam, hyper)
            total += loss * len(batch)
        scores = score_mentions(model, dataset.dev, baseline)
        record = EpochRecord(
            epoch,
            total / len(train),
            scores.strict.f1,
            scores.loose_macro.f1,
            scores.loose_micro.f1,
        )
        result.log.append(record)
        LOGGER.info(
            f"Epoch {epoch}: loss {record.train_loss:.4f}, dev strict {record.dev_strict:.4f} "
            f"macro {record.dev_macro:.4f} micro {record.dev_micro:.4f}"
        )
        if record.dev_strict > best_f1:
            best_f1, result.best_epoch, stale = record.dev_strict, epoch, 0
            best_params = {name: p.copy() for name, p in params.items()}
        else:
            stale += 1
        if stale >= config.patience:
            LOGGER.info(f"Stopping after epoch {epoch} ({stale} epoch(s) without improvement)")
            break

    for name, value in best_params.items():
        params[name][...] = value
    LOGGER.info(f"Selected epoch {result.best_epoch} (dev strict F1 {best_f1:.4f})")
    if log_path is not None:
        write_training_log(log_path, result.log)
    if config.tune_thresholds:
        result.tuning = tune_model_thresholds(model, dataset.dev, **(threshold_options or {}))
    return result


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_parameter: str
    errors: dict[str, float]
    """Largest relative error per parameter tensor."""
    checked: int
    skipped: int = 0
    """Coordinates left out: gradients under `noise_floor`, or steps across a ReLU kink."""
    noise_floor: float = 0.0

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def grad_check(
    model: Model,
    batch: Sequence[Mention],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    samples: int = 50,
    seed: int = 0,
    gradient_hook: Callable[[dict[str, FloatArray]], dict[str, FloatArray]] | None = None,
) -> GradCheckReport:
    """Compares analytic gradients with central differences on a float64 copy of `model`,
    in eval mode (no dropout), for up to `samples` random coordinates per tensor.

    A coordinate is skipped when `|analytic| + |numeric|` is below the level at which
    float64 rounding of the loss alone could reach `tolerance`, or when the step moves a
    document-MLP pre-activation across zero. Skipped coordinates are replaced by further
    random ones while the tensor has any left.

    `gradient_hook` may rewrite the analytic gradients before the comparison."""
    model = model.astype(np.float64)
    inputs = make_batch(batch, model)
    _, analytic = forward_backward(inputs, model, "eval")
    if gradient_hook is not None:
        analytic = gradient_hook(analytic)
    rng = np.random.default_rng(seed)

    def evaluate_at() -> tuple[float, BoolArray]:
        result = forward(inputs, model, "eval")
        return nll_loss_from_logits(result.logits, inputs.labels), result.document.z > 0.0

    base_loss, base_active = evaluate_at()
    eps = float(np.finfo(np.float64).eps)
    noise_floor = 50.0 * eps * max(1.0, abs(base_loss)) / (step * tolerance)

    errors: dict[str, float] = {}
    checked = skipped = 0
    for name, param in model.named_parameters().items():
        size = param.size
        if name == WORDS_PARAMETER:
            size -= param.shape[1]  # the OOV row is not trainable
        worst, used = 0.0, 0
        for flat in rng.permutation(size):
            if used == samples:
                break
            index = np.unravel_index(int(flat), param.shape)
            original = param[index]
            param[index] = original + step
            plus, plus_active = evaluate_at()
            param[index] = original - step
            minus, minus_active = evaluate_at()
            param[index] = original
            numeric = (plus - minus) / (2.0 * step)
            a = float(analytic[name][index])
            kink = not (
                np.array_equal(plus_active, base_active)
                and np.array_equal(minus_active, base_active)
            )
            if kink or abs(a) + abs(numeric) < noise_floor:
                skipped += 1
                continue
            worst = max(worst, relative_error(a, numeric))
            used += 1
        checked += used
        errors[name] = worst
        LOGGER.debug(f"grad_check {name}: max relative error {worst:.3e} over {used} coordinates")
    worst_parameter = max(errors, key=lambda n: errors[n])
    report = GradCheckReport(
        errors[worst_parameter], worst_parameter, errors, checked, skipped, noise_floor
    )
    log = LOGGER.info if report.passed(tolerance) else LOGGER.warning
    log(
        f"grad_check: max relative error {report.max_rel_error:.3e} ({worst_parameter}), "
        f"{checked} coordinates checked, {skipped} under {noise_floor:.1e} or at a kink"
    )
    return report
