from __future__ import annotations

import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, TypedDict

import numpy as np

from .types import FloatArray, LoadMode
from .utils import atomic_write

if sys.version_info >= (3, 11):
    from typing import NotRequired, Self
else:
    from typing_extensions import NotRequired, Self

LOGGER = logging.getLogger(__name__)

MAX_LISTED_IDS = 10
"""Number of dangling document ids listed in referential-integrity errors."""


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus data."""


class JsonSpan(TypedDict):
    """JSON dict: Half-open token interval of a mention."""

    start: int
    end: int


class JsonMention(TypedDict):
    """JSON dict: One line of a mentions file."""

    tokens: list[str]
    mention: JsonSpan
    types: NotRequired[list[str]]
    doc_id: NotRequired[str | None]


class JsonDocument(TypedDict):
    """JSON dict: One line of a documents file."""

    doc_id: str
    tokens: list[str]


@dataclass
class TypeOntology:
    """Ordered set of type paths (eg. `/organization/company`) with dense ids.
    Ids are assigned in insertion order and never change, so they are stable across
    `save`/`load`."""

    types: list[str] = field(default_factory=list)
    index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self.index and self.types:
            paths, self.types = self.types, []
            for path in paths:
                if path in self.index:
                    raise CorpusError(f"Duplicate type path in ontology: {path}")
                self.add(path)

    @staticmethod
    def validate_path(path: str) -> str:
        """Checks that a type path starts with `/` and has no empty segments."""
        if not isinstance(path, str) or not path.startswith("/") or "" in path[1:].split("/"):
            raise CorpusError(f"Invalid type path: {path!r}")
        return path

    def add(self, path: str) -> int:
        """Adds a type path if unseen and returns its id."""
        if (type_id := self.index.get(path)) is not None:
            return type_id
        self.validate_path(path)
        self.index[path] = len(self.types)
        self.types.append(path)
        return self.index[path]

    def id_of(self, path: str) -> int | None:
        return self.index.get(path)

    def digest(self) -> str:
        """SHA-256 of the newline-joined type paths, in id order."""
        return hashlib.sha256("\n".join(self.types).encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        with atomic_write(path) as file:
            file.write("".join(f"{type_path}\n" for type_path in self.types))

    @classmethod
    def load(cls, path: str | Path) -> Self:
        with open(path, "r", encoding="utf-8") as file:
            return cls([line.strip() for line in file if line.strip()])

    def __len__(self) -> int:
        return len(self.types)

    def __iter__(self) -> Iterator[str]:
        return iter(self.types)

    def __contains__(self, path: object) -> bool:
        return path in self.index


@dataclass(frozen=True)
class Mention:
    """An entity mention: the sentence tokens, the half-open span `[start, end)` of the
    mention, its gold type ids, and an optional link to its document.
    Gold paths outside the ontology (kept in `keep` mode) live in `unknown_types`."""

    sentence_tokens: tuple[str, ...]
    span: tuple[int, int]
    gold_types: frozenset[int] = frozenset()
    doc_id: str | None = None
    unknown_types: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(self.sentence_tokens) == 0:
            raise CorpusError("Mention has no tokens")
        start, end = self.span
        if not 0 <= start < end <= len(self.sentence_tokens):
            detail = " (span empty)" if start == end else ""
            raise CorpusError(
                f"Mention span [{start}, {end}) out of bounds "
                f"for {len(self.sentence_tokens)} tokens{detail}"
            )

    @property
    def mention_tokens(self) -> tuple[str, ...]:
        return self.sentence_tokens[self.span[0] : self.span[1]]

    @property
    def scoreable(self) -> bool:
        """Whether every gold type is in the ontology (otherwise it can never be matched)."""
        return not self.unknown_types


@dataclass(frozen=True)
class DocumentRecord:
    """A document of the document store, used as document-level context."""

    doc_id: str
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.tokens) == 0:
            raise CorpusError(f"Document '{self.doc_id}' has no tokens")


@dataclass(frozen=True)
class Dataset:
    """Train/dev/test splits, the document store, and the ontology built from train labels."""

    train: list[Mention]
    dev: list[Mention]
    test: list[Mention]
    documents: dict[str, DocumentRecord]
    ontology: TypeOntology

    def splits(self) -> dict[str, list[Mention]]:
        return {"train": self.train, "dev": self.dev, "test": self.test}

    def vocabulary(self) -> set[str]:
        """All tokens appearing in the mention sentences of any split."""
        return {tok for split in self.splits().values() for m in split for tok in m.sentence_tokens}


def _is_offset(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def parse_mention_record(
    line: str, ontology: TypeOntology, mode: LoadMode = "strict"
) -> Mention:
    """Parses one JSON line of a mentions file into a validated `Mention`.

    Args:
        line: The JSON text.
        ontology: The type ontology; grown in `train` mode.
        mode: `train` adds unseen types and requires at least one type, `strict` rejects
            unseen types, `keep` keeps them as unscoreable labels, `unlabeled` additionally
            accepts records without a `types` key.
    """
    try:
        data: JsonMention | Any = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusError(f"Malformed JSON: {e}") from None
    if not isinstance(data, dict):
        raise CorpusError("Mention record must be a JSON object")
    tokens = data.get("tokens")
    if not isinstance(tokens, list) or not all(isinstance(tok, str) for tok in tokens):
        raise CorpusError("'tokens' must be an array of strings")
    if not tokens:
        raise CorpusError("Mention has no tokens")
    span = data.get("mention")
    if not (isinstance(span, dict) and all(_is_offset(span.get(k)) for k in ("start", "end"))):
        raise CorpusError("'mention' must be an object with integer 'start' and 'end'")
    doc_id = data.get("doc_id")
    if doc_id is not None and not isinstance(doc_id, str):
        raise CorpusError("'doc_id' must be a string or null")

    if "types" not in data:
        if mode != "unlabeled":
            raise CorpusError("Missing 'types' key")
        paths: list[str] = []
    else:
        paths = data["types"]
        if not isinstance(paths, list) or not all(isinstance(p, str) for p in paths):
            raise CorpusError("'types' must be an array of strings")

    gold: set[int] = set()
    unknown: list[str] = []
    for path in paths:
        if mode == "train":
            gold.add(ontology.add(path))
        elif (type_id := ontology.id_of(path)) is not None:
            gold.add(type_id)
        elif mode == "strict":
            raise CorpusError(f"Unknown type '{path}'")
        else:
            TypeOntology.validate_path(path)
            if path not in unknown:
                unknown.append(path)
    if mode == "train" and not gold:
        raise CorpusError("Training mention has no gold types")

    return Mention(
        sentence_tokens=tuple(tokens),
        span=(span["start"], span["end"]),
        gold_types=frozenset(gold),
        doc_id=doc_id,
        unknown_types=tuple(unknown),
    )


def serialize_mention(m: Mention, ontology: TypeOntology) -> str:
    """Serializes a mention to one JSON line (inverse of `parse_mention_record`)."""
    record: JsonMention = {
        "tokens": list(m.sentence_tokens),
        "mention": {"start": m.span[0], "end": m.span[1]},
        "types": [ontology.types[t] for t in sorted(m.gold_types)] + list(m.unknown_types),
        "doc_id": m.doc_id,
    }
    return json.dumps(record, ensure_ascii=False)


def _read_lines(path: str | Path) -> Iterator[tuple[int, str]]:
    """Yields `(line_number, line)` for every non-blank line of a UTF-8 file."""
    with open(path, "r", encoding="utf-8") as file:
        for num, line in enumerate(file, start=1):
            if line.strip():
                yield num, line


def load_mentions(path: str | Path, ontology: TypeOntology, mode: LoadMode) -> list[Mention]:
    """Loads a JSON-lines mentions file. Errors name the file and line number."""
    mentions: list[Mention] = []
    for num, line in _read_lines(path):
        try:
            mentions.append(parse_mention_record(line, ontology, mode))
        except CorpusError as e:
            raise CorpusError(f"{path}:{num}: {e}") from None
    unknown = {t for m in mentions for t in m.unknown_types}
    if unknown:
        LOGGER.warning(
            f"{path}: {len(unknown)} type(s) outside the ontology kept as unscoreable: "
            f"{', '.join(sorted(unknown)[:MAX_LISTED_IDS])}"
        )
    return mentions


def load_documents(path: str | Path) -> dict[str, DocumentRecord]:
    """Loads a JSON-lines document store keyed by `doc_id`."""
    documents: dict[str, DocumentRecord] = {}
    for num, line in _read_lines(path):
        try:
            data: JsonDocument | Any = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusError(f"{path}:{num}: Malformed JSON: {e}") from None
        if not (isinstance(data, dict) and isinstance(data.get("doc_id"), str)):
            raise CorpusError(f"{path}:{num}: 'doc_id' must be a string")
        tokens = data.get("tokens")
        if not isinstance(tokens, list) or not all(isinstance(tok, str) for tok in tokens):
            raise CorpusError(f"{path}:{num}: 'tokens' must be an array of strings")
        if data["doc_id"] in documents:
            raise CorpusError(f"{path}:{num}: Duplicate doc_id '{data['doc_id']}'")
        try:
            documents[data["doc_id"]] = DocumentRecord(data["doc_id"], tuple(tokens))
        except CorpusError as e:
            raise CorpusError(f"{path}:{num}: {e}") from None
    return documents


def check_doc_links(mentions: Iterable[Mention], documents: dict[str, DocumentRecord]) -> None:
    """Raises if any mention links to a document absent from the store."""
    dangling = sorted({m.doc_id for m in mentions if m.doc_id is not None} - documents.keys())
    if dangling:
        listed = ", ".join(dangling[:MAX_LISTED_IDS])
        more = ""
        if len(dangling) > MAX_LISTED_IDS:
            more = f" (and {len(dangling) - MAX_LISTED_IDS} more)"
        raise CorpusError(f"{len(dangling)} dangling doc_id(s): {listed}{more}")


def load_dataset(
    train_path: str | Path,
    dev_path: str | Path | None,
    test_path: str | Path | None,
    docs_path: str | Path | None = None,
    unknown_types: LoadMode = "strict",
) -> Dataset:
    """Loads the three splits and the optional document store.
    The ontology is built from the training labels; dev/test types outside it are
    rejected (`strict`) or kept as unscoreable labels (`keep`).

    Args:
        train_path: Training mentions (JSON lines).
        dev_path: Dev mentions, or `None` for an empty split.
        test_path: Test mentions, or `None` for an empty split.
        docs_path: Document store (JSON lines), or `None` without document context.
        unknown_types: `strict` or `keep`.
    """
    if unknown_types not in ("strict", "keep"):
        raise ValueError(f"unknown_types must be 'strict' or 'keep', not '{unknown_types}'")
    ontology = TypeOntology()
    train = load_mentions(train_path, ontology, "train")
    dev = [] if dev_path is None else load_mentions(dev_path, ontology, unknown_types)
    test = [] if test_path is None else load_mentions(test_path, ontology, unknown_types)
    documents: dict[str, DocumentRecord] = {}
    if docs_path is not None:
        documents = load_documents(docs_path)
        check_doc_links([*train, *dev, *test], documents)

    for name, split in (("train", train), ("dev", dev), ("test", test)):
        if not split:
            LOGGER.warning(f"The {name} split is empty")
        LOGGER.info(f"Loaded {len(split)} {name} mentions")
    LOGGER.info(f"Ontology: {len(ontology)} types; document store: {len(documents)} documents")
    return Dataset(train, dev, test, documents, ontology)


def label_vector(m: Mention, ontology: TypeOntology) -> FloatArray:
    """Binary vector `y` of length |T| with `y[t] = 1` exactly for the gold types of `m`."""
    bits = np.zeros(len(ontology), dtype=np.float64)
    for type_id in m.gold_types:
        if not 0 <= type_id < len(ontology):
            raise CorpusError(f"Type id {type_id} out of range for {len(ontology)} types")
        bits[type_id] = 1.0
    return bits


def gold_paths(m: Mention, ontology: TypeOntology) -> set[str]:
    """Gold type paths of a mention, including paths outside the ontology."""
    return {ontology.types[t] for t in m.gold_types} | set(m.unknown_types)


def context_window(m: Mention, window: int | None) -> tuple[tuple[str, ...], tuple[int, int]]:
    """Truncates the sentence to at most `window` tokens on each side of the mention.
    Mention tokens are always kept; the returned span is re-based on the truncated tokens.
    `window=None` passes the whole sentence through, `window=0` keeps the mention only."""
    if window is None:
        return m.sentence_tokens, m.span
    if window < 0:
        raise ValueError(f"window must be >= 0 (got {window})")
    start, end = m.span
    left = max(0, start - window)
    right = min(len(m.sentence_tokens), end + window)
    return m.sentence_tokens[left:right], (start - left, end - left)
