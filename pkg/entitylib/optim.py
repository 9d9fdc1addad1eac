from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .types import FloatArray


@dataclass(frozen=True)
class AdamHyper:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """First and second moment estimates per parameter name, and the step counter."""

    m: dict[str, FloatArray] = field(default_factory=dict)
    v: dict[str, FloatArray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: Mapping[str, FloatArray]) -> AdamState:
        return cls(
            m={name: np.zeros_like(p) for name, p in params.items()},
            v={name: np.zeros_like(p) for name, p in params.items()},
        )


def adam_update(
    params: Mapping[str, FloatArray],
    grads: Mapping[str, FloatArray],
    state: AdamState,
    hyper: AdamHyper = AdamHyper(),
) -> None:
    """One bias-corrected Adam step, applied to `params` in place."""
    if missing := set(grads) - set(params):
        raise ValueError(f"Gradients for unknown parameter(s): {', '.join(sorted(missing))}")
    state.t += 1
    correction1 = 1.0 - hyper.beta1**state.t
    correction2 = 1.0 - hyper.beta2**state.t
    for name, grad in grads.items():
        param = params[name]
        if grad.shape != param.shape:
            raise ValueError(f"{name}: gradient shape {grad.shape} != {param.shape}")
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * grad
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * grad**2
        step = hyper.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + hyper.eps)
        param -= step.astype(param.dtype, copy=False)
