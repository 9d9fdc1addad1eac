from __future__ import annotations

from enum import Enum
from typing import Literal, TypeAlias

import numpy as np
from numpy.typing import NDArray

FloatArray: TypeAlias = NDArray[np.floating]
IntArray: TypeAlias = NDArray[np.intp]
BoolArray: TypeAlias = NDArray[np.bool_]

Mode: TypeAlias = Literal["train", "eval"]
Precision: TypeAlias = Literal["float32", "float64"]
LoadMode: TypeAlias = Literal["train", "strict", "keep", "unlabeled"]

LOAD_MODES = {
    "train": "Grow the ontology with unseen types; every mention needs at least one type",
    "strict": "Reject types outside the ontology",
    "keep": "Keep types outside the ontology as unscoreable gold labels",
    "unlabeled": "Accept mentions without a 'types' key (prediction input)",
}

OOV_POLICIES = {
    "zero": "Out-of-vocabulary tokens map to the zero vector",
    "lowercase": "Try the lowercased token before falling back to the zero vector",
}

PROBABILITY_EPSILON = 1e-12
"""Clamp applied to probabilities inside the log-likelihood."""


class OovPolicy(str, Enum):
    ZERO = "zero"
    LOWERCASE = "lowercase"

    @staticmethod
    def from_str(s: str) -> OovPolicy:
        try:
            return OovPolicy(s.strip().lower())
        except ValueError:
            raise ValueError(
                f"Unknown OOV policy '{s}' (expected one of: {', '.join(OOV_POLICIES)})"
            ) from None

    def __str__(self) -> str:
        return OOV_POLICIES[self.value]


def dtype_of(precision: Precision | str) -> type[np.floating]:
    """Maps a precision name to the numpy float type used for model tensors."""
    if precision == "float32":
        return np.float32
    if precision == "float64":
        return np.float64
    raise ValueError(f"Unsupported precision '{precision}' (expected float32 or float64)")
