import json
import struct

import numpy as np
import pytest
import synthetic

from entitylib.checkpoint import (
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
    update_thresholds,
)
from entitylib.corpus import TypeOntology
from entitylib.model import predict_probabilities


@pytest.fixture
def model():
    model = synthetic.model(documents=synthetic.doc_vectors(["d1", "d2"]), window=None)
    model.thresholds = np.array([0.3, 0.5, 0.7, 0.25, 0.9])
    return model


@pytest.fixture
def saved(model, tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    return path


class TestCheckpoint:
    def test_round_trip_is_bitwise(self, model, saved):
        loaded = load_checkpoint(saved)
        for name, value in model.named_parameters().items():
            restored = loaded.named_parameters()[name]
            assert restored.dtype == value.dtype, name
            assert restored.tobytes() == value.tobytes(), name
        assert loaded.word_matrix.tobytes() == model.word_matrix.tobytes()
        assert loaded.thresholds.tobytes() == model.thresholds.tobytes()
        assert loaded.documents.vectors.tobytes() == model.documents.vectors.tobytes()
        assert loaded.documents.doc_ids == ["d1", "d2"]
        assert loaded.words.tokens == model.words.tokens
        assert loaded.config == model.config and loaded.config.window is None
        assert loaded.ontology.types == synthetic.TYPES

    def test_loaded_model_predicts_the_same(self, model, saved):
        mentions = synthetic.mentions(6, seed=2, doc_ids=["d1", "d2", "d3"])
        np.testing.assert_array_equal(
            predict_probabilities(load_checkpoint(saved), mentions),
            predict_probabilities(model, mentions),
        )

    def test_single_precision(self, tmp_path):
        model = synthetic.model(dtype="float32", documents=synthetic.doc_vectors(["d1", "d2"]))
        save_checkpoint(model, tmp_path / "f32.ckpt")
        loaded = load_checkpoint(tmp_path / "f32.ckpt")
        assert loaded.classifier.W.dtype == np.float32
        assert loaded.documents.vectors.dtype == np.float32
        assert loaded.thresholds.dtype == np.float64
        np.testing.assert_array_equal(loaded.classifier.W, model.classifier.W)
        mentions = synthetic.mentions(4, seed=1, doc_ids=["d1", "d2"])
        np.testing.assert_array_equal(
            predict_probabilities(loaded, mentions), predict_probabilities(model, mentions)
        )

        data = (tmp_path / "f32.ckpt").read_bytes()
        _, _, header_len = struct.unpack_from("<8sIQ", data)
        header = json.loads(data[20 : 20 + header_len])
        assert header["tensor_dtype"] == "<f4"
        assert header["float64_tensors"] == ["classifier.thresholds"]
        dtypes = {entry["name"]: entry["dtype"] for entry in header["tensors"]}
        assert dtypes["classifier.thresholds"] == "<f8"
        assert {d for n, d in dtypes.items() if n != "classifier.thresholds"} == {"<f4"}

    def test_without_documents(self, tmp_path):
        save_checkpoint(synthetic.model(), tmp_path / "m.ckpt")
        assert load_checkpoint(tmp_path / "m.ckpt").documents.dim is None

    def test_truncated_file(self, saved):
        data = saved.read_bytes()
        saved.write_bytes(data[:-100])
        with pytest.raises(CheckpointError, match="checksum mismatch"):
            load_checkpoint(saved)
        saved.write_bytes(data[:10])
        with pytest.raises(CheckpointError, match="too short"):
            load_checkpoint(saved)

    def test_flipped_byte(self, saved):
        data = bytearray(saved.read_bytes())
        data[len(data) // 2] ^= 0xFF
        saved.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="checksum"):
            load_checkpoint(saved)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("the 0.1 0.2 0.3\n" * 10)
        with pytest.raises(CheckpointError, match="not a checkpoint file"):
            load_checkpoint(path)

    def test_version_mismatch(self, saved):
        data = bytearray(saved.read_bytes())
        struct.pack_into("<I", data, 8, 99)
        saved.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="unsupported checkpoint version 99"):
            load_checkpoint(saved)

    def test_ontology_mismatch(self, saved):
        assert load_checkpoint(saved, synthetic.ontology()).ontology.types == synthetic.TYPES
        with pytest.raises(CheckpointError, match="incompatible ontology"):
            load_checkpoint(saved, TypeOntology(["/person", "/location"]))

    def test_update_thresholds(self, model, saved):
        update_thresholds(saved, np.full(5, 0.4))
        loaded = load_checkpoint(saved)
        np.testing.assert_array_equal(loaded.thresholds, np.full(5, 0.4))
        np.testing.assert_array_equal(loaded.classifier.W, model.classifier.W)
        before = saved.read_bytes()
        with pytest.raises(ValueError, match="strictly inside"):
            update_thresholds(saved, np.full(5, 1.0))
        assert saved.read_bytes() == before
