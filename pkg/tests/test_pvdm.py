import numpy as np
import pytest
import synthetic

from entitylib.corpus import DocumentRecord
from entitylib.embeddings import EmbeddingError
from entitylib.pvdm import PVDMConfig, infer_doc_vector, train_pvdm

COLORS = DocumentRecord("colors", tuple("red green blue yellow".split() * 15))
ANIMALS = DocumentRecord("animals", tuple("cat dog fish bird".split() * 15))
SMALL = PVDMConfig(dim=8, context_size=1, epochs=100, seed=3)


@pytest.fixture(scope="module")
def model():
    return train_pvdm([COLORS, ANIMALS], SMALL)


class TestTrainPVDM:
    def test_loss_decreases(self, model):
        assert len(model.loss_log) == SMALL.epochs
        assert model.loss_log[-1] < model.loss_log[0]

    def test_long_document_converges(self):
        long_doc = DocumentRecord("long", tuple("a b c d e f g h i j".split() * 300))
        model = train_pvdm([long_doc], PVDMConfig(dim=8, context_size=2, epochs=5, seed=0))
        assert np.all(np.isfinite(model.loss_log))
        assert model.loss_log[-1] < model.loss_log[0]

    def test_distinct_documents(self, model):
        table = model.doc_table()
        assert table.doc_ids == ["colors", "animals"]
        colors, animals = table.vector("colors"), table.vector("animals")
        assert synthetic.cosine(colors, colors) == pytest.approx(1.0)
        assert synthetic.cosine(colors, animals) < 1.0

    def test_default_dimension(self):
        model = train_pvdm([COLORS], PVDMConfig(epochs=1))
        assert model.doc_table().vector("colors").shape == (50,)

    def test_zero_epochs(self):
        model = train_pvdm([COLORS, ANIMALS], PVDMConfig(dim=4, epochs=0, seed=1))
        again = train_pvdm([COLORS, ANIMALS], PVDMConfig(dim=4, epochs=0, seed=1))
        assert model.loss_log == []
        np.testing.assert_array_equal(model.doc_vectors, again.doc_vectors)
        assert np.all(np.abs(model.doc_vectors) <= 0.5 / 4)

    def test_seeded_runs_identical(self):
        config = PVDMConfig(dim=4, context_size=2, epochs=3, seed=11)
        first = train_pvdm([COLORS, ANIMALS], config)
        second = train_pvdm([COLORS, ANIMALS], config)
        np.testing.assert_array_equal(first.doc_vectors, second.doc_vectors)
        assert first.loss_log == second.loss_log

    def test_errors(self):
        with pytest.raises(EmbeddingError, match="at least one document"):
            train_pvdm([])
        with pytest.raises(EmbeddingError, match="Empty PV-DM vocabulary"):
            train_pvdm([DocumentRecord("d", ("once",))], PVDMConfig(min_count=2))
        with pytest.raises(ValueError):
            PVDMConfig(dim=0)

    def test_from_dict(self):
        assert PVDMConfig.from_dict({"dim": 10}).dim == 10
        with pytest.raises(ValueError, match="Unknown PV-DM option"):
            PVDMConfig.from_dict({"size": 10})


class TestInferDocVector:
    def test_close_to_trained_vector(self, model):
        table = model.doc_table()
        inferred = infer_doc_vector(model, COLORS.tokens)
        to_colors = synthetic.cosine(inferred, table.vector("colors"))
        assert to_colors >= 0.5
        assert to_colors > synthetic.cosine(inferred, table.vector("animals"))

    def test_empty_tokens(self, model):
        np.testing.assert_array_equal(infer_doc_vector(model, []), np.zeros(SMALL.dim))

    def test_all_out_of_vocabulary(self, model, caplog):
        vec = infer_doc_vector(model, ["unseen", "words"])
        np.testing.assert_array_equal(vec, np.zeros(SMALL.dim))
        assert "out of the PV-DM vocabulary" in caplog.text

    def test_deterministic(self, model):
        tokens = ["red", "cat", "blue", "dog"]
        first = infer_doc_vector(model, tokens, steps=20, seed=5)
        second = infer_doc_vector(model, tokens, steps=20, seed=5)
        np.testing.assert_array_equal(first, second)

    def test_model_unchanged(self, model):
        before = model.word_output.copy(), model.word_input.copy()
        infer_doc_vector(model, ANIMALS.tokens, steps=5)
        np.testing.assert_array_equal(model.word_output, before[0])
        np.testing.assert_array_equal(model.word_input, before[1])
