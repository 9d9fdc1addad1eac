import numpy as np
import pytest

from entitylib.embeddings import (
    DocEmbeddingTable,
    EmbeddingError,
    WordEmbeddingTable,
    load_doc_vectors,
    load_word_vectors,
    lookup,
    write_doc_vectors,
)
from entitylib.types import OovPolicy


@pytest.fixture
def vector_file(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("the 0.1 0.2 0.3\nmonopoly 1 2 3\nParis -1 0 1.5\n", encoding="utf-8")
    return path


class TestLoadWordVectors:
    def test_format_example(self, vector_file):
        table = load_word_vectors(vector_file)
        assert table.dim == 3
        assert len(table) == 3
        np.testing.assert_array_equal(lookup(table, "the"), [0.1, 0.2, 0.3])

    def test_dimension_mismatch_names_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("a 1 2 3\nb 1 2\n")
        with pytest.raises(EmbeddingError, match=r"bad\.txt:2: expected 3 values, found 2"):
            load_word_vectors(path)

    def test_expected_dimension(self, vector_file):
        with pytest.raises(EmbeddingError, match=":1: expected 4 values, found 3"):
            load_word_vectors(vector_file, expected_dim=4)

    def test_word2vec_header_skipped(self, tmp_path):
        path = tmp_path / "w2v.txt"
        path.write_text("2 3\na 1 2 3\nb 4 5 6\n")
        table = load_word_vectors(path)
        assert table.tokens == ["a", "b"]
        path.write_text("2 3\na 1 2 3\nb 4 5\n")
        with pytest.raises(EmbeddingError, match=":3: expected 3 values, found 2"):
            load_word_vectors(path)

    def test_numeric_first_line_without_header(self, tmp_path):
        path = tmp_path / "numbers.txt"
        path.write_text("1 2\n3 4\n")
        table = load_word_vectors(path)
        assert table.tokens == ["1", "3"] and table.dim == 1
        np.testing.assert_array_equal(lookup(table, "3"), [4.0])
        path.write_text("1 2\n")
        assert load_word_vectors(path).tokens == ["1"]

    def test_tokens_with_spaces(self, tmp_path):
        path = tmp_path / "glove.txt"
        path.write_text("a 1 2\n. . . 3 4\n")
        table = load_word_vectors(path)
        np.testing.assert_array_equal(lookup(table, ". . ."), [3.0, 4.0])

    def test_non_numeric_value(self, tmp_path):
        path = tmp_path / "nan.txt"
        path.write_text("a 1 2\nb 1 x\n")
        with pytest.raises(EmbeddingError, match=":2: non-numeric"):
            load_word_vectors(path)

    def test_duplicates_keep_first(self, tmp_path):
        path = tmp_path / "dup.txt"
        path.write_text("a 1 2\na 3 4\n")
        np.testing.assert_array_equal(lookup(load_word_vectors(path), "a"), [1.0, 2.0])

    def test_vocabulary_filter(self, vector_file):
        table = load_word_vectors(vector_file, vocabulary={"Monopoly", "the"})
        assert table.tokens == ["the", "monopoly"]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        with pytest.raises(EmbeddingError, match="empty vector file"):
            load_word_vectors(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_word_vectors(tmp_path / "absent.txt")


class TestLookup:
    def test_present_token_bit_exact(self, vector_file):
        table = load_word_vectors(vector_file)
        assert lookup(table, "Paris").tobytes() == table.vectors[2].tobytes()

    def test_lowercase_policy(self, vector_file):
        table = load_word_vectors(vector_file, oov_policy=OovPolicy.LOWERCASE)
        np.testing.assert_array_equal(lookup(table, "Monopoly"), [1.0, 2.0, 3.0])

    def test_zero_policy(self, vector_file):
        table = load_word_vectors(vector_file, oov_policy=OovPolicy.ZERO)
        np.testing.assert_array_equal(lookup(table, "Monopoly"), np.zeros(3))
        np.testing.assert_array_equal(lookup(table, "absent"), np.zeros(3))

    def test_restrict(self, vector_file):
        table = load_word_vectors(vector_file).restrict(["Monopoly", "unknown"])
        assert table.tokens == ["monopoly"]
        np.testing.assert_array_equal(lookup(table, "Monopoly"), [1.0, 2.0, 3.0])

    def test_shape_check(self):
        with pytest.raises(EmbeddingError, match="does not match"):
            WordEmbeddingTable(3, ["a"], np.zeros((1, 2)))

    def test_oov_policy_names(self):
        assert OovPolicy.from_str(" Zero ") is OovPolicy.ZERO
        with pytest.raises(ValueError, match="Unknown OOV policy"):
            OovPolicy.from_str("random")


class TestDocVectors:
    def test_two_lines(self, tmp_path):
        path = tmp_path / "docs.txt"
        rows = [" ".join(["d1", *["0.5"] * 50]), " ".join(["d2", *["-1"] * 50])]
        path.write_text("\n".join(rows) + "\n")
        table = load_doc_vectors(path)
        assert len(table) == 2 and table.dim == 50
        np.testing.assert_array_equal(table.vector("d2"), -np.ones(50))

    def test_duplicate_doc_id(self, tmp_path):
        path = tmp_path / "docs.txt"
        path.write_text("d1 1 2\nd1 3 4\n")
        with pytest.raises(EmbeddingError, match=":2: duplicate doc_id 'd1'"):
            load_doc_vectors(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "docs.txt"
        path.write_text("")
        table = load_doc_vectors(path)
        assert len(table) == 0 and table.dim is None
        with pytest.raises(EmbeddingError, match="dimension undefined"):
            table.vector("d1")

    def test_write_then_load(self, tmp_path):
        table = DocEmbeddingTable.from_dict({"a": np.array([0.25, -1.5]), "b": np.zeros(2)})
        write_doc_vectors(tmp_path / "out.txt", table)
        assert (tmp_path / "out.txt").read_text() == "a 0.25 -1.5\nb 0 0\n"
        loaded = load_doc_vectors(tmp_path / "out.txt")
        np.testing.assert_array_equal(loaded.vectors, table.vectors)

    def test_merged(self):
        first = DocEmbeddingTable.from_dict({"a": np.ones(2), "b": np.zeros(2)})
        second = DocEmbeddingTable.from_dict({"b": np.full(2, 3.0), "c": np.ones(2)})
        merged = first.merged(second)
        assert merged.doc_ids == ["a", "b", "c"]
        np.testing.assert_array_equal(merged.vector("b"), [3.0, 3.0])
        assert first.merged(DocEmbeddingTable()) is first
        with pytest.raises(EmbeddingError, match="dims"):
            first.merged(DocEmbeddingTable.from_dict({"z": np.ones(3)}))
