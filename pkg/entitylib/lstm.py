"""Stacked bi-directional LSTM with a hand-written backward pass.

Batches are padded to a common length and carry a boolean token mask. A masked step leaves
the recurrent state untouched, so padding never influences real positions in either
direction. Gate blocks are ordered [input, forget, cell, output] in every weight matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import BoolArray, FloatArray
from .utils import sigmoid, uniform

GATES = ("input", "forget", "cell", "output")


@dataclass
class DirectionParams:
    """Weights of one LSTM direction: input weights `W_x` (4H x d_in), recurrent weights
    `W_h` (4H x H) and bias `b` (4H)."""

    W_x: FloatArray
    W_h: FloatArray
    b: FloatArray

    def __post_init__(self) -> None:
        four_h, hidden = self.W_h.shape
        if four_h != 4 * hidden or self.W_x.shape[0] != four_h or self.b.shape != (four_h,):
            raise ValueError(
                f"Inconsistent LSTM shapes: W_x {self.W_x.shape}, W_h {self.W_h.shape}, "
                f"b {self.b.shape}"
            )

    @property
    def hidden_size(self) -> int:
        return int(self.W_h.shape[1])

    @property
    def input_size(self) -> int:
        return int(self.W_x.shape[1])

    @classmethod
    def init(
        cls,
        input_size: int,
        hidden_size: int,
        rng: np.random.Generator,
        scale: float,
        dtype: type[np.floating],
    ) -> DirectionParams:
        return cls(
            W_x=uniform(rng, (4 * hidden_size, input_size), scale, dtype),
            W_h=uniform(rng, (4 * hidden_size, hidden_size), scale, dtype),
            b=uniform(rng, (4 * hidden_size,), scale, dtype),
        )

    def zeros_like(self) -> DirectionParams:
        return DirectionParams(
            np.zeros_like(self.W_x), np.zeros_like(self.W_h), np.zeros_like(self.b)
        )

    def astype(self, dtype: type[np.floating]) -> DirectionParams:
        return DirectionParams(
            self.W_x.astype(dtype), self.W_h.astype(dtype), self.b.astype(dtype)
        )

    def named(self, prefix: str) -> dict[str, FloatArray]:
        return {f"{prefix}.W_x": self.W_x, f"{prefix}.W_h": self.W_h, f"{prefix}.b": self.b}


@dataclass
class LSTMLayerParams:
    """One bi-directional layer: a left-to-right and a right-to-left direction."""

    forward: DirectionParams
    backward: DirectionParams

    def __post_init__(self) -> None:
        if (self.forward.input_size, self.forward.hidden_size) != (
            self.backward.input_size,
            self.backward.hidden_size,
        ):
            raise ValueError("Both directions of a layer must have the same shapes")

    @property
    def input_size(self) -> int:
        return self.forward.input_size

    @property
    def hidden_size(self) -> int:
        return self.forward.hidden_size


@dataclass
class BiLSTMEncoder:
    """L stacked bi-directional layers; layer l > 0 reads the 2H outputs of layer l - 1."""

    layers: list[LSTMLayerParams]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("A BiLSTM encoder needs at least one layer")
        hidden = self.layers[0].hidden_size
        for num, layer in enumerate(self.layers):
            if layer.hidden_size != hidden:
                raise ValueError(f"Layer {num} has hidden size {layer.hidden_size} != {hidden}")
            if num > 0 and layer.input_size != 2 * hidden:
                raise ValueError(f"Layer {num} input size {layer.input_size} != {2 * hidden}")

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    @property
    def hidden_size(self) -> int:
        return self.layers[0].hidden_size

    @property
    def output_size(self) -> int:
        return 2 * self.hidden_size

    @classmethod
    def init(
        cls,
        input_size: int,
        hidden_size: int,
        num_layers: int,
        rng: np.random.Generator,
        scale: float,
        dtype: type[np.floating] = np.float64,
    ) -> BiLSTMEncoder:
        layers = []
        for num in range(num_layers):
            d_in = input_size if num == 0 else 2 * hidden_size
            layers.append(
                LSTMLayerParams(
                    DirectionParams.init(d_in, hidden_size, rng, scale, dtype),
                    DirectionParams.init(d_in, hidden_size, rng, scale, dtype),
                )
            )
        return cls(layers)

    def zeros_like(self) -> BiLSTMEncoder:
        return BiLSTMEncoder(
            [
                LSTMLayerParams(layer.forward.zeros_like(), layer.backward.zeros_like())
                for layer in self.layers
            ]
        )

    def astype(self, dtype: type[np.floating]) -> BiLSTMEncoder:
        return BiLSTMEncoder(
            [
                LSTMLayerParams(layer.forward.astype(dtype), layer.backward.astype(dtype))
                for layer in self.layers
            ]
        )

    def named_parameters(self, prefix: str = "encoder") -> dict[str, FloatArray]:
        named: dict[str, FloatArray] = {}
        for num, layer in enumerate(self.layers):
            named |= layer.forward.named(f"{prefix}.layer{num}.fwd")
            named |= layer.backward.named(f"{prefix}.layer{num}.bwd")
        return named


@dataclass
class _CellCache:
    x: FloatArray
    h: FloatArray
    c: FloatArray
    i: FloatArray
    f: FloatArray
    g: FloatArray
    o: FloatArray
    tanh_c: FloatArray


def _cell_forward(
    x: FloatArray, h: FloatArray, c: FloatArray, p: DirectionParams
) -> tuple[FloatArray, FloatArray, _CellCache]:
    H = p.hidden_size
    a = x @ p.W_x.T + h @ p.W_h.T + p.b
    i = sigmoid(a[..., :H])
    f = sigmoid(a[..., H : 2 * H])
    g = np.tanh(a[..., 2 * H : 3 * H])
    o = sigmoid(a[..., 3 * H :])
    c_new = f * c + i * g
    tanh_c = np.tanh(c_new)
    return o * tanh_c, c_new, _CellCache(x, h, c, i, f, g, o, tanh_c)


def _cell_backward(
    dh: FloatArray, dc: FloatArray, cache: _CellCache, p: DirectionParams, grads: DirectionParams
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Accumulates parameter gradients into `grads`; returns (dx, dh_prev, dc_prev)."""
    do = dh * cache.tanh_c
    dc = dc + dh * cache.o * (1.0 - cache.tanh_c**2)
    da = np.concatenate(
        [
            dc * cache.g * cache.i * (1.0 - cache.i),
            dc * cache.c * cache.f * (1.0 - cache.f),
            dc * cache.i * (1.0 - cache.g**2),
            do * cache.o * (1.0 - cache.o),
        ],
        axis=-1,
    )
    grads.W_x += da.T @ cache.x
    grads.W_h += da.T @ cache.h
    grads.b += da.sum(axis=0)
    return da @ p.W_x, da @ p.W_h, dc * cache.f


def lstm_cell(
    x: FloatArray, h: FloatArray, c: FloatArray, params: DirectionParams
) -> tuple[FloatArray, FloatArray]:
    """One LSTM step: returns `(h', c')` with `c' = f*c + i*g` and `h' = o*tanh(c')`."""
    if x.shape[-1] != params.input_size or h.shape[-1] != params.hidden_size or h.shape != c.shape:
        raise ValueError(
            f"Shape mismatch: x {x.shape}, h {h.shape}, c {c.shape} for input size "
            f"{params.input_size} and hidden size {params.hidden_size}"
        )
    h_new, c_new, _ = _cell_forward(x, h, c, params)
    return h_new, c_new


_Steps = list[tuple[int, _CellCache]]


@dataclass
class BiLSTMCache:
    """Everything the backward pass needs from a batched forward pass."""

    mask: BoolArray
    layer_inputs: list[FloatArray]
    steps: list[tuple[_Steps, _Steps]]


def _run_direction(
    z: FloatArray, mask: BoolArray, p: DirectionParams, reverse: bool
) -> tuple[FloatArray, _Steps]:
    batch, length, _ = z.shape
    h = np.zeros((batch, p.hidden_size), dtype=z.dtype)
    c = np.zeros_like(h)
    out = np.zeros((batch, length, p.hidden_size), dtype=z.dtype)
    steps: _Steps = []
    for t in range(length - 1, -1, -1) if reverse else range(length):
        m = mask[:, t, None]
        h_new, c_new, cache = _cell_forward(z[:, t], h, c, p)
        h = np.where(m, h_new, h)
        c = np.where(m, c_new, c)
        out[:, t] = h
        steps.append((t, cache))
    return out, steps


def _backprop_direction(
    d_out: FloatArray, steps: _Steps, mask: BoolArray, p: DirectionParams, grads: DirectionParams
) -> FloatArray:
    batch, length, _ = d_out.shape
    dz = np.zeros((batch, length, p.input_size), dtype=d_out.dtype)
    dh = np.zeros((batch, p.hidden_size), dtype=d_out.dtype)
    dc = np.zeros_like(dh)
    for t, cache in reversed(steps):
        m = mask[:, t, None]
        dh_total = dh + d_out[:, t]
        dx, dh_prev, dc_prev = _cell_backward(
            np.where(m, dh_total, 0.0), np.where(m, dc, 0.0), cache, p, grads
        )
        dh = dh_prev + np.where(m, 0.0, dh_total)
        dc = dc_prev + np.where(m, 0.0, dc)
        dz[:, t] = dx
    return dz


def bilstm_forward_batch(
    x: FloatArray, mask: BoolArray, encoder: BiLSTMEncoder
) -> tuple[FloatArray, BiLSTMCache]:
    """Runs the encoder over a padded batch `x` (B x n x d). Returns the top-layer states
    (B x n x 2H) and the cache for `bilstm_backward_batch`."""
    if x.shape[-1] != encoder.input_size:
        raise ValueError(f"Input size {x.shape[-1]} != encoder input size {encoder.input_size}")
    cache = BiLSTMCache(mask=mask, layer_inputs=[], steps=[])
    z = x
    for layer in encoder.layers:
        cache.layer_inputs.append(z)
        fwd, fwd_steps = _run_direction(z, mask, layer.forward, reverse=False)
        bwd, bwd_steps = _run_direction(z, mask, layer.backward, reverse=True)
        cache.steps.append((fwd_steps, bwd_steps))
        z = np.concatenate([fwd, bwd], axis=-1)
    return z, cache


def bilstm_backward_batch(
    d_out: FloatArray, cache: BiLSTMCache, encoder: BiLSTMEncoder, grads: BiLSTMEncoder
) -> FloatArray:
    """Backpropagates `d_out` (B x n x 2H) through the stack, accumulating parameter
    gradients into `grads`. Returns the gradient with respect to the inputs."""
    H = encoder.hidden_size
    for num in range(len(encoder.layers) - 1, -1, -1):
        layer, layer_grads = encoder.layers[num], grads.layers[num]
        fwd_steps, bwd_steps = cache.steps[num]
        d_out = _backprop_direction(
            d_out[..., :H], fwd_steps, cache.mask, layer.forward, layer_grads.forward
        ) + _backprop_direction(
            d_out[..., H:], bwd_steps, cache.mask, layer.backward, layer_grads.backward
        )
    return d_out


def bilstm_forward(vectors: FloatArray, encoder: BiLSTMEncoder) -> FloatArray:
    """Hidden states `h_i = [h_fwd_i; h_bwd_i]` of the top layer for one sequence (n x d)."""
    if vectors.ndim != 2 or len(vectors) == 0:
        raise ValueError(f"Expected a non-empty sequence of vectors, got shape {vectors.shape}")
    mask = np.ones((1, len(vectors)), dtype=bool)
    hidden, _ = bilstm_forward_batch(vectors[None], mask, encoder)
    return hidden[0]
