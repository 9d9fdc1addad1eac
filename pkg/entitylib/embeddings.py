from __future__ import annotations

import itertools
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection, Iterable, Iterator

import numpy as np

from .types import FloatArray, OovPolicy
from .utils import atomic_write, format_float

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

LOGGER = logging.getLogger(__name__)


class EmbeddingError(ValueError):
    """Raised for malformed vector files and invalid embedding queries."""


@dataclass
class WordEmbeddingTable:
    """Word vectors stored as a dense matrix with a token -> row index.
    `lookup` is total: unknown tokens fall back to their lowercase form (if the policy
    allows it) and then to the zero vector."""

    dim: int
    tokens: list[str]
    vectors: FloatArray
    oov_policy: OovPolicy = OovPolicy.LOWERCASE
    trainable: bool = False
    index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.vectors.shape != (len(self.tokens), self.dim):
            raise EmbeddingError(
                f"Vector matrix shape {self.vectors.shape} does not match "
                f"{len(self.tokens)} tokens of dimension {self.dim}"
            )
        if not self.index:
            self.index = {tok: row for row, tok in enumerate(self.tokens)}

    def row_of(self, token: str) -> int | None:
        """Row of `token` in `vectors` under the OOV policy, or `None` if it is unknown."""
        if (row := self.index.get(token)) is not None:
            return row
        if self.oov_policy is OovPolicy.LOWERCASE:
            return self.index.get(token.lower())
        return None

    def restrict(self, vocabulary: Iterable[str]) -> WordEmbeddingTable:
        """Returns a copy keeping only the rows reachable from `vocabulary` under the policy."""
        rows = sorted({row for tok in vocabulary if (row := self.row_of(tok)) is not None})
        return WordEmbeddingTable(
            dim=self.dim,
            tokens=[self.tokens[row] for row in rows],
            vectors=self.vectors[rows].copy(),
            oov_policy=self.oov_policy,
            trainable=self.trainable,
        )

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self.index


@dataclass
class DocEmbeddingTable:
    """Document vectors keyed by document id. `dim` stays `None` until the first vector."""

    dim: int | None = None
    doc_ids: list[str] = field(default_factory=list)
    vectors: FloatArray = field(default_factory=lambda: np.zeros((0, 0)))
    index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.dim is not None and self.vectors.shape != (len(self.doc_ids), self.dim):
            raise EmbeddingError(
                f"Vector matrix shape {self.vectors.shape} does not match "
                f"{len(self.doc_ids)} documents of dimension {self.dim}"
            )
        if not self.index:
            for row, doc_id in enumerate(self.doc_ids):
                if doc_id in self.index:
                    raise EmbeddingError(f"Duplicate doc_id '{doc_id}'")
                self.index[doc_id] = row
        if not np.all(np.isfinite(self.vectors)):
            raise EmbeddingError("Document vectors contain non-finite values")

    @classmethod
    def from_dict(cls, vectors: dict[str, FloatArray], dim: int | None = None) -> Self:
        """Builds a table from a `doc_id -> vector` mapping (in iteration order)."""
        if dim is None and vectors:
            dim = len(next(iter(vectors.values())))
        matrix = np.zeros((len(vectors), dim or 0))
        for row, vec in enumerate(vectors.values()):
            if len(vec) != dim:
                raise EmbeddingError(f"Inconsistent document vector dimension {len(vec)} != {dim}")
            matrix[row] = vec
        return cls(dim=dim, doc_ids=list(vectors), vectors=matrix)

    def vector(self, doc_id: str) -> FloatArray:
        """Vector of `doc_id`. Raises `KeyError` if absent and `EmbeddingError` if the table
        has no dimension yet."""
        if self.dim is None:
            raise EmbeddingError("Document vector table is empty (dimension undefined)")
        return self.vectors[self.index[doc_id]]

    def merged(self, other: DocEmbeddingTable) -> DocEmbeddingTable:
        """Returns a table with the vectors of both tables (`other` wins on shared ids)."""
        if other.dim is None:
            return self
        if self.dim is not None and self.dim != other.dim:
            raise EmbeddingError(f"Cannot merge document vectors of dims {self.dim}, {other.dim}")
        vectors = {doc_id: self.vectors[row] for doc_id, row in self.index.items()}
        vectors |= {doc_id: other.vectors[row] for doc_id, row in other.index.items()}
        return DocEmbeddingTable.from_dict(vectors, other.dim)

    def __len__(self) -> int:
        return len(self.doc_ids)

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self.index


def lookup(table: WordEmbeddingTable, token: str) -> FloatArray:
    """Vector of `token`: exact match, then lowercase form (if allowed), then zeros."""
    if (row := table.row_of(token)) is None:
        return np.zeros(table.dim, dtype=table.vectors.dtype)
    return table.vectors[row].copy()


def _is_word2vec_header(fields: list[str], following: list[str] | None) -> bool:
    """A `count dim` first line is a header only if the next vector line is wide enough
    for `dim` values; `1 2` followed by `3 4` is two one-dimensional vectors."""
    if len(fields) != 2 or not all(f.isdecimal() for f in fields):
        return False
    header_dim = int(fields[1])
    if following is None:
        return int(fields[0]) == 0 and header_dim >= 1
    return header_dim >= 1 and len(following) >= header_dim + 1


def _parse_vector_lines(
    path: str | Path, expected_dim: int | None
) -> Iterator[tuple[int, str, list[str], int]]:
    """Yields `(line_number, key, value_fields, dim)` for each vector line of a text file.
    The dimension comes from the first line (or `expected_dim`); a word2vec-style
    `count dim` header is skipped. Keys containing spaces (as in some GloVe releases)
    are accepted when the trailing `dim` fields are numeric."""
    dim = expected_dim
    with open(path, "r", encoding="utf-8") as file:
        lines = (
            (num, line.rstrip("\n").rstrip(" \r").split(" "))
            for num, line in enumerate(file, start=1)
            if line.strip()
        )
        first = next(lines, None)
        if first is None:
            return
        second = next(lines, None)
        head: list[tuple[int, list[str]]] = [first]
        if _is_word2vec_header(first[1], None if second is None else second[1]):
            header_dim = int(first[1][1])
            if dim is not None and header_dim != dim:
                raise EmbeddingError(
                    f"{path}:{first[0]}: header dimension {header_dim} != expected {dim}"
                )
            LOGGER.debug(f"{path}: skipping word2vec header ({' x '.join(first[1])})")
            dim, head = header_dim, []
        if second is not None:
            head.append(second)
        for num, fields in itertools.chain(head, lines):
            if dim is None:
                dim = len(fields) - 1
                if dim < 1:
                    raise EmbeddingError(f"{path}:{num}: no vector values")
            if len(fields) < dim + 1:
                raise EmbeddingError(
                    f"{path}:{num}: expected {dim} values, found {len(fields) - 1}"
                )
            if len(fields) > dim + 1:
                if all(_is_number(f) for f in fields[1 : len(fields) - dim]):
                    raise EmbeddingError(
                        f"{path}:{num}: expected {dim} values, found {len(fields) - 1}"
                    )
                key = " ".join(fields[: len(fields) - dim])
                LOGGER.debug(f"{path}:{num}: token with spaces: {key!r}")
            else:
                key = fields[0]
            yield num, key, fields[len(fields) - dim :], dim


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _to_floats(path: str | Path, num: int, values: list[str]) -> FloatArray:
    try:
        vec = np.array([float(v) for v in values], dtype=np.float64)
    except ValueError as e:
        raise EmbeddingError(f"{path}:{num}: non-numeric value ({e})") from None
    if not np.all(np.isfinite(vec)):
        raise EmbeddingError(f"{path}:{num}: non-finite value")
    return vec


def load_word_vectors(
    path: str | Path,
    expected_dim: int | None = None,
    oov_policy: OovPolicy = OovPolicy.LOWERCASE,
    vocabulary: Collection[str] | None = None,
    trainable: bool = False,
) -> WordEmbeddingTable:
    """Loads GloVe-compatible text vectors (`token v1 ... vd` per line).

    Args:
        path: Path to the vector file.
        expected_dim: Dimension to validate against (default: inferred from the first line).
        oov_policy: Lookup policy for unknown tokens.
        vocabulary: If given, only tokens in it (or whose lowercase form is in it) are kept.
        trainable: Whether the vectors are fine-tuned during training.
    """
    wanted: set[str] = set()
    if vocabulary is not None:
        wanted = set(vocabulary) | {tok.lower() for tok in vocabulary}
    tokens: list[str] = []
    rows: list[FloatArray] = []
    seen: set[str] = set()
    duplicates = 0
    dim: int | None = None
    for num, token, values, dim in _parse_vector_lines(path, expected_dim):
        if token in seen:
            duplicates += 1
            continue
        seen.add(token)
        if vocabulary is not None and token not in wanted:
            continue
        rows.append(_to_floats(path, num, values))
        tokens.append(token)
    if dim is None:
        raise EmbeddingError(f"{path}: empty vector file")
    if duplicates:
        LOGGER.warning(f"{path}: {duplicates} duplicate token(s) ignored (first occurrence wins)")
    LOGGER.info(f"Loaded {len(tokens)} word vectors of dimension {dim} from {path}")
    vectors = np.vstack(rows) if rows else np.zeros((0, dim))
    return WordEmbeddingTable(dim, tokens, vectors, oov_policy, trainable)


def load_doc_vectors(path: str | Path, expected_dim: int | None = None) -> DocEmbeddingTable:
    """Loads document vectors (`doc_id v1 ... vd` per line). Doc ids must be unique.
    An empty file gives an empty table whose dimension is undefined."""
    vectors: dict[str, FloatArray] = {}
    dim: int | None = None
    for num, doc_id, values, dim in _parse_vector_lines(path, expected_dim):
        if doc_id in vectors:
            raise EmbeddingError(f"{path}:{num}: duplicate doc_id '{doc_id}'")
        vectors[doc_id] = _to_floats(path, num, values)
    if dim is None:
        LOGGER.warning(f"{path}: no document vectors")
        return DocEmbeddingTable()
    LOGGER.info(f"Loaded {len(vectors)} document vectors of dimension {dim} from {path}")
    return DocEmbeddingTable.from_dict(vectors, dim)


def write_doc_vectors(path: str | Path, table: DocEmbeddingTable) -> None:
    """Writes document vectors in the `doc_id v1 ... vd` text format."""
    with atomic_write(path) as file:
        for doc_id, row in table.index.items():
            values = " ".join(format_float(float(v)) for v in table.vectors[row])
            file.write(f"{doc_id} {values}\n")
