from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping

from .types import Precision, dtype_of

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of the model and of its training loop.
    Use `TrainConfig.from_dict` to build one from a YAML section (unknown keys are rejected).
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 200
    dropout_rate: float = 0.5
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    window: int | None = 10
    """Context tokens kept on each side of the mention (`None` keeps the whole sentence)."""
    doc_context: bool = True
    fine_tune_embeddings: bool = False
    init_range: float = 0.01
    hidden_size: int = 100
    """LSTM hidden units per direction."""
    num_layers: int = 2
    doc_dim: int = 50
    """Document vector size, used when no document vectors are available."""
    doc_hidden: int = 70
    fallback: bool = True
    dtype: Precision = "float32"
    workers: int = 1
    eval_batch_size: int = 512
    tune_thresholds: bool = True

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ValueError("batch sizes must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1) (got {self.dropout_rate})")
        if self.init_range <= 0.0:
            raise ValueError(f"init_range must be > 0 (got {self.init_range})")
        if self.learning_rate <= 0.0 or not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Invalid Adam hyper-parameters")
        if self.max_epochs < 1 or self.patience < 0:
            raise ValueError("max_epochs must be >= 1 and patience >= 0")
        if self.window is not None and self.window < 0:
            raise ValueError(f"window must be >= 0 (got {self.window})")
        if min(self.hidden_size, self.num_layers, self.doc_dim, self.doc_hidden) < 1:
            raise ValueError("Layer sizes must be >= 1")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1 (got {self.workers})")
        dtype_of(self.dtype)

    @property
    def np_dtype(self) -> type:
        return dtype_of(self.dtype)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Self:
        known = {f.name for f in fields(cls)}
        if unknown := set(data) - known:
            raise ValueError(f"Unknown training option(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)
