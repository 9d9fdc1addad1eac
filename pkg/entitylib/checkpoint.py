"""Single-file model checkpoints.

Layout: 8-byte magic, little-endian u32 format version, u64 header length, JSON header,
raw little-endian row-major tensors, and a SHA-256 digest of everything before it. The
header holds the training config, the ontology (and its hash), the word vocabulary, the
document ids and a `name / shape / dtype / offset / nbytes` entry per tensor.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .classifier import TypeEmbeddingMatrix, check_thresholds
from .config import TrainConfig
from .corpus import TypeOntology
from .embeddings import DocEmbeddingTable, WordEmbeddingTable
from .encoders import AttentionParams, DocMLPParams
from .lstm import BiLSTMEncoder, DirectionParams, LSTMLayerParams
from .model import WORDS_PARAMETER, Model
from .types import FloatArray, OovPolicy
from .utils import atomic_write

LOGGER = logging.getLogger(__name__)

MAGIC = b"ENTYPECK"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DIGEST_SIZE = hashlib.sha256().digest_size

DOC_VECTORS = "documents.vectors"
THRESHOLDS = "classifier.thresholds"


class CheckpointError(ValueError):
    """Raised for unreadable, corrupted or incompatible checkpoint files."""


def _tensors(model: Model) -> dict[str, FloatArray]:
    """Tensors in the model dtype; the thresholds are always float64."""
    tensors = dict(model.named_parameters())
    tensors[WORDS_PARAMETER] = model.word_matrix
    if model.documents.dim is not None:
        tensors[DOC_VECTORS] = model.documents.vectors.astype(model.dtype, copy=False)
    tensors[THRESHOLDS] = model.thresholds
    return tensors


def save_checkpoint(model: Model, path: str | Path) -> None:
    """Writes `model` (parameters, thresholds, config, ontology, vocabulary, document
    vectors) to `path` atomically."""
    entries: list[dict[str, Any]] = []
    blobs: list[bytes] = []
    offset = 0
    for name, tensor in _tensors(model).items():
        array = np.ascontiguousarray(tensor, dtype=tensor.dtype.newbyteorder("<"))
        blob = array.tobytes(order="C")
        entries.append(
            {
                "name": name,
                "shape": list(array.shape),
                "dtype": array.dtype.str,
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = {
        "config": model.config.to_dict(),
        "ontology": list(model.ontology.types),
        "ontology_hash": model.ontology.digest(),
        "vocabulary": list(model.words.tokens),
        "oov_policy": model.words.oov_policy.value,
        "tensor_dtype": np.dtype(model.dtype).newbyteorder("<").str,
        "float64_tensors": [THRESHOLDS],
        "documents": list(model.documents.doc_ids),
        "tensors": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(MAGIC, VERSION, len(header_bytes)) + header_bytes + b"".join(blobs)
    with atomic_write(path, "wb") as file:
        file.write(body)
        file.write(hashlib.sha256(body).digest())
    LOGGER.info(f"Saved checkpoint with {len(entries)} tensors to {path}")


def _read(path: str | Path) -> tuple[dict[str, Any], bytes, int]:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size + _DIGEST_SIZE:
        raise CheckpointError(f"{path}: file too short to be a checkpoint (truncated?)")
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version} (expected {VERSION})"
        )
    body, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (file truncated or corrupted)")
    start = _PREFIX.size
    try:
        header = json.loads(body[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: invalid header ({e})") from None
    return header, body, start + header_len


def load_checkpoint(path: str | Path, ontology: TypeOntology | None = None) -> Model:
    """Reads a checkpoint written by `save_checkpoint`.

    Args:
        path: The checkpoint file.
        ontology: If given, the checkpoint's ontology hash must match it.
    """
    header, body, data_start = _read(path)
    try:
        tensors: dict[str, FloatArray] = {}
        for entry in header["tensors"]:
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"], dtype=np.int64))
            array = np.frombuffer(body, dtype, count, data_start + entry["offset"])
            tensors[entry["name"]] = array.reshape(entry["shape"]).astype(dtype.newbyteorder("="))
        saved_ontology = TypeOntology(list(header["ontology"]))
        if saved_ontology.digest() != header["ontology_hash"]:
            raise CheckpointError(f"{path}: ontology does not match its recorded hash")
        if ontology is not None and ontology.digest() != header["ontology_hash"]:
            raise CheckpointError(
                f"{path}: incompatible ontology (checkpoint hash {header['ontology_hash'][:12]}, "
                f"given {ontology.digest()[:12]})"
            )
        config = TrainConfig.from_dict(header["config"])
        model = _build_model(header, tensors, saved_ontology, config)
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: malformed checkpoint ({e!r})") from None
    LOGGER.info(f"Loaded checkpoint {path}: {len(saved_ontology)} types, {len(tensors)} tensors")
    return model


def _build_model(
    header: dict[str, Any],
    tensors: dict[str, FloatArray],
    ontology: TypeOntology,
    config: TrainConfig,
) -> Model:
    word_matrix = tensors[WORDS_PARAMETER]
    vocabulary = list(header["vocabulary"])
    words = WordEmbeddingTable(
        dim=word_matrix.shape[1],
        tokens=vocabulary,
        vectors=word_matrix[:-1],
        oov_policy=OovPolicy(header["oov_policy"]),
        trainable=config.fine_tune_embeddings,
    )
    documents = DocEmbeddingTable()
    if DOC_VECTORS in tensors:
        vectors = tensors[DOC_VECTORS]
        documents = DocEmbeddingTable(vectors.shape[1], list(header["documents"]), vectors)

    def direction(prefix: str) -> DirectionParams:
        return DirectionParams(
            tensors[f"{prefix}.W_x"], tensors[f"{prefix}.W_h"], tensors[f"{prefix}.b"]
        )

    encoder = BiLSTMEncoder(
        [
            LSTMLayerParams(
                direction(f"encoder.layer{num}.fwd"), direction(f"encoder.layer{num}.bwd")
            )
            for num in range(config.num_layers)
        ]
    )
    return Model(
        ontology=ontology,
        words=words,
        word_matrix=word_matrix,
        documents=documents,
        encoder=encoder,
        attention=AttentionParams(tensors["attention.W_a"]),
        document=DocMLPParams(tensors["document.W_d1"], tensors["document.W_d2"]),
        classifier=TypeEmbeddingMatrix(tensors["classifier.W"]),
        thresholds=check_thresholds(tensors[THRESHOLDS], len(ontology)),
        config=config,
    )


def update_thresholds(path: str | Path, thresholds: FloatArray) -> None:
    """Rewrites the thresholds stored in a checkpoint, keeping everything else."""
    model = load_checkpoint(path)
    model.thresholds = check_thresholds(thresholds, len(model.ontology))
    save_checkpoint(model, path)
