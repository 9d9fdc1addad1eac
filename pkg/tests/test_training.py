from dataclasses import replace

import numpy as np
import pytest
import synthetic

from entitylib.corpus import Mention, TypeOntology
from entitylib.embeddings import DocEmbeddingTable, WordEmbeddingTable
from entitylib.model import WORDS_PARAMETER, init_model
from entitylib.training import (
    LOG_COLUMNS,
    grad_check,
    relative_error,
    score_mentions,
    train_loop,
    tune_model_thresholds,
)


@pytest.fixture(scope="module")
def toy_data():
    return synthetic.dataset(synthetic.mentions(40, seed=1), synthetic.mentions(15, seed=2))


def doc_context_data(seed: int) -> tuple:
    """Identical sentences whose type depends only on the cluster of the linked document."""
    rng = np.random.default_rng(seed)
    centers = {"sport": np.array([1.0, 1, 1, 0, 0, 0]), "travel": np.array([0.0, 0, 0, 1, 1, 1])}
    labels = {"sport": frozenset({0}), "travel": frozenset({1})}
    vectors, splits = {}, {"train": [], "dev": []}
    for split, count in (("train", 40), ("dev", 20)):
        for i in range(count):
            topic = "sport" if i % 2 == 0 else "travel"
            doc_id = f"{split}-{topic}-{i}"
            vectors[doc_id] = centers[topic] + 0.1 * rng.normal(size=6)
            tokens = ("jordan", "visited", "today")
            splits[split].append(Mention(tokens, (0, 1), labels[topic], doc_id))
    types = TypeOntology(["/person", "/location"])
    data = synthetic.dataset(splits["train"], splits["dev"], types)
    return data, DocEmbeddingTable.from_dict(vectors)


class TestTrainLoop:
    def test_overfits_separable_data(self):
        mentions = synthetic.mentions(200, seed=4)
        data = synthetic.dataset(mentions, mentions)
        config = replace(synthetic.SMALL, batch_size=50, max_epochs=200, patience=200)
        result = train_loop(data, synthetic.words(), config)
        assert score_mentions(result.model, mentions).strict.f1 == 1.0
        assert max(record.dev_strict for record in result.log) == 1.0

    def test_document_context_is_needed(self):
        data, documents = doc_context_data(seed=5)
        config = replace(
            synthetic.SMALL, batch_size=8, max_epochs=100, patience=100, learning_rate=0.02
        )
        with_docs = train_loop(data, synthetic.words(), config, documents)
        assert score_mentions(with_docs.model, data.dev).strict.f1 >= 0.95
        without = train_loop(data, synthetic.words(), replace(config, doc_context=False), documents)
        assert score_mentions(without.model, data.dev).strict.f1 <= 0.60

    def test_patience_zero_runs_one_epoch(self, toy_data):
        result = train_loop(toy_data, synthetic.words(), replace(synthetic.SMALL, patience=0))
        assert len(result.log) == 1
        assert result.best_epoch == 1

    def test_keeps_best_epoch(self, toy_data):
        config = replace(synthetic.SMALL, max_epochs=8, patience=8, dropout_rate=0.5)
        result = train_loop(toy_data, synthetic.words(), config)
        best = result.log[result.best_epoch - 1].dev_strict
        assert best == max(record.dev_strict for record in result.log)
        assert best >= result.log[-1].dev_strict
        assert score_mentions(result.model, toy_data.dev).strict.f1 == best

    def test_deterministic_logs(self, toy_data, tmp_path):
        config = replace(synthetic.SMALL, max_epochs=3, dropout_rate=0.5, seed=7)
        first = train_loop(toy_data, synthetic.words(), config, log_path=tmp_path / "a.tsv")
        second = train_loop(toy_data, synthetic.words(), config, log_path=tmp_path / "b.tsv")
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
        for name, value in first.model.named_parameters().items():
            np.testing.assert_array_equal(value, second.model.named_parameters()[name])

    def test_log_format(self, toy_data, tmp_path):
        path = tmp_path / "train.tsv"
        result = train_loop(
            toy_data, synthetic.words(), replace(synthetic.SMALL, max_epochs=2), log_path=path
        )
        lines = path.read_text().splitlines()
        assert lines[0].split("\t") == list(LOG_COLUMNS)
        assert len(lines) == 1 + len(result.log)
        fields = lines[1].split("\t")
        assert fields[0] == "1" and len(fields) == 5
        assert float(fields[1]) == pytest.approx(result.log[0].train_loss, abs=1e-6)

    def test_tunes_thresholds_after_training(self, toy_data):
        config = replace(synthetic.SMALL, max_epochs=2, tune_thresholds=True)
        result = train_loop(toy_data, synthetic.words(), config)
        assert result.tuning is not None
        np.testing.assert_array_equal(result.model.thresholds, result.tuning.thresholds)
        assert result.tuning.dev_strict_after >= result.tuning.dev_strict_before

    def test_empty_splits(self, toy_data):
        with pytest.raises(ValueError, match="non-empty train and dev"):
            train_loop(replace(toy_data, dev=[]), synthetic.words(), synthetic.SMALL)

    def test_tune_model_thresholds(self, toy_data):
        model = synthetic.model()
        report = tune_model_thresholds(model, toy_data.dev, max_passes=3)
        assert model.thresholds is report.thresholds
        assert score_mentions(model, toy_data.dev).strict.f1 >= report.dev_strict_before


class TestGradCheck:
    @staticmethod
    def toy_model(seed: int, **overrides):
        config = replace(
            synthetic.SMALL, init_range=0.5, hidden_size=8, num_layers=2, doc_dim=6, **overrides
        )
        documents = synthetic.doc_vectors(["d1", "d2"], seed=seed)
        batch = synthetic.mentions(3, seed=seed, doc_ids=["d1", "d2", "d1"])
        return synthetic.model(config, seed=seed, documents=documents), batch

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradients_match_finite_differences(self, seed):
        model, batch = self.toy_model(seed)
        assert model.feature_dim == 10 + 16 + 6 and len(model.ontology) == 5
        report = grad_check(model, batch, step=1e-5, seed=seed)
        assert report.max_rel_error < 1e-4, report.errors
        assert report.errors.keys() == model.named_parameters().keys()
        assert report.checked >= 50 * 4

    def test_fine_tuned_words(self):
        model, batch = self.toy_model(3, fine_tune_embeddings=True)
        report = grad_check(model, batch, samples=300)
        assert WORDS_PARAMETER in report.errors
        assert report.max_rel_error < 1e-4, report.errors

    def test_detects_corrupted_gradient(self):
        model, batch = self.toy_model(4)

        def flip(grads):
            return {**grads, "attention.W_a": -grads["attention.W_a"]}

        report = grad_check(model, batch, gradient_hook=flip)
        assert report.worst_parameter == "attention.W_a"
        assert not report.passed(1e-4)

    def test_detects_zeroed_gradient(self):
        model, batch = self.toy_model(1)

        def zero(grads):
            return {**grads, "classifier.W": np.zeros_like(grads["classifier.W"])}

        report = grad_check(model, batch, seed=1, gradient_hook=zero)
        assert report.worst_parameter == "classifier.W"
        assert report.errors["classifier.W"] == pytest.approx(1.0)

    def test_skips_steps_across_relu_kink(self):
        model, batch = self.toy_model(6)
        model.document.W_d1[0] = 0.0
        report = grad_check(model, batch, samples=1000)
        assert report.max_rel_error < 1e-4, report.errors
        assert report.skipped >= model.document.W_d1.shape[1]
        assert report.checked > 0 and report.noise_floor > 0.0

    def test_zero_model(self):
        words = WordEmbeddingTable(4, ["a", "b"], np.zeros((2, 4)))
        config = replace(synthetic.SMALL, hidden_size=3, num_layers=1, doc_dim=2, doc_hidden=2)
        model = init_model(TypeOntology(["/x", "/y"]), words, None, config)
        for value in model.named_parameters().values():
            value[...] = 0.0
        batch = [Mention(("a", "b"), (0, 1), frozenset({0})), Mention(("b",), (0, 1))]
        report = grad_check(model, batch)
        assert report.max_rel_error == 0.0

    def test_leaves_model_untouched(self):
        model, batch = self.toy_model(5)
        before = {name: value.copy() for name, value in model.named_parameters().items()}
        grad_check(model, batch, samples=5)
        for name, value in model.named_parameters().items():
            np.testing.assert_array_equal(value, before[name])


def test_relative_error():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, -1.0) == 1.0
    assert relative_error(1e-10, 0.0) == pytest.approx(1e-2)
