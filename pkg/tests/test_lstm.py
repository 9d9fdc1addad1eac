import math

import numpy as np
import pytest

from entitylib.lstm import (
    BiLSTMEncoder,
    DirectionParams,
    LSTMLayerParams,
    bilstm_backward_batch,
    bilstm_forward,
    bilstm_forward_batch,
    lstm_cell,
)


def zero_direction(input_size: int, hidden: int) -> DirectionParams:
    return DirectionParams(
        np.zeros((4 * hidden, input_size)), np.zeros((4 * hidden, hidden)), np.zeros(4 * hidden)
    )


def scalar_cell(x, h, c, p: DirectionParams):
    """Gate equations evaluated one unit at a time with `math`."""
    H = p.hidden_size

    def pre(row):
        total = float(p.b[row])
        total += sum(float(p.W_x[row, k]) * x[k] for k in range(len(x)))
        total += sum(float(p.W_h[row, k]) * h[k] for k in range(H))
        return total

    def sig(z):
        return 1.0 / (1.0 + math.exp(-z))

    h_new, c_new = [], []
    for j in range(H):
        i = sig(pre(j))
        f = sig(pre(H + j))
        g = math.tanh(pre(2 * H + j))
        o = sig(pre(3 * H + j))
        c_j = f * c[j] + i * g
        c_new.append(c_j)
        h_new.append(o * math.tanh(c_j))
    return h_new, c_new


class TestLSTMCell:
    def test_zero_parameters(self):
        p = zero_direction(3, 2)
        x = np.array([1.0, -2.0, 0.5])
        h = np.array([0.3, -0.7])
        c = np.array([1.2, -0.4])
        h_new, c_new = lstm_cell(x, h, c, p)
        np.testing.assert_allclose(c_new, 0.5 * c)
        np.testing.assert_allclose(h_new, 0.5 * np.tanh(0.5 * c))

    def test_all_zero(self):
        h_new, c_new = lstm_cell(np.zeros(3), np.zeros(2), np.zeros(2), zero_direction(3, 2))
        np.testing.assert_array_equal(h_new, np.zeros(2))
        np.testing.assert_array_equal(c_new, np.zeros(2))

    def test_scalar_oracle(self):
        rng = np.random.default_rng(42)
        p = DirectionParams.init(4, 3, rng, 0.8, np.float64)
        x, h, c = rng.normal(size=4), rng.normal(size=3), rng.normal(size=3)
        h_new, c_new = lstm_cell(x, h, c, p)
        h_ref, c_ref = scalar_cell(list(x), list(h), list(c), p)
        np.testing.assert_allclose(h_new, h_ref, rtol=0, atol=1e-12)
        np.testing.assert_allclose(c_new, c_ref, rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="Shape mismatch"):
            lstm_cell(np.zeros(2), np.zeros(2), np.zeros(2), zero_direction(3, 2))

    def test_inconsistent_parameters(self):
        with pytest.raises(ValueError, match="Inconsistent LSTM shapes"):
            DirectionParams(np.zeros((8, 3)), np.zeros((8, 3)), np.zeros(8))


class TestBiLSTM:
    def test_single_token_reduces_to_cells(self):
        rng = np.random.default_rng(0)
        encoder = BiLSTMEncoder.init(3, 2, 1, rng, 0.5)
        x = rng.normal(size=(1, 3))
        zeros = np.zeros(2)
        fwd, _ = lstm_cell(x[0], zeros, zeros, encoder.layers[0].forward)
        bwd, _ = lstm_cell(x[0], zeros, zeros, encoder.layers[0].backward)
        np.testing.assert_allclose(bilstm_forward(x, encoder)[0], np.concatenate([fwd, bwd]))

    def test_zero_parameters(self):
        layers = [
            LSTMLayerParams(zero_direction(3, 2), zero_direction(3, 2)),
            LSTMLayerParams(zero_direction(4, 2), zero_direction(4, 2)),
        ]
        hidden = bilstm_forward(np.random.default_rng(1).normal(size=(5, 3)), BiLSTMEncoder(layers))
        np.testing.assert_array_equal(hidden, np.zeros((5, 4)))

    def test_prefix_property(self):
        rng = np.random.default_rng(2)
        encoder = BiLSTMEncoder.init(3, 4, 1, rng, 0.5)
        x = rng.normal(size=(6, 3))
        j = 3
        perturbed = x.copy()
        perturbed[j] += 1.0
        before, after = bilstm_forward(x, encoder), bilstm_forward(perturbed, encoder)
        H = encoder.hidden_size
        np.testing.assert_array_equal(before[:j, :H], after[:j, :H])
        np.testing.assert_array_equal(before[j + 1 :, H:], after[j + 1 :, H:])
        assert not np.allclose(before[j], after[j])

    def test_padding_never_influences_real_positions(self):
        rng = np.random.default_rng(3)
        encoder = BiLSTMEncoder.init(3, 2, 2, rng, 0.5)
        short, long = rng.normal(size=(2, 3)), rng.normal(size=(5, 3))
        batch = np.zeros((2, 5, 3))
        batch[0, :2] = short
        batch[0, 2:] = rng.normal(size=(3, 3))
        batch[1] = long
        mask = np.zeros((2, 5), dtype=bool)
        mask[0, :2] = True
        mask[1] = True
        hidden, _ = bilstm_forward_batch(batch, mask, encoder)
        np.testing.assert_allclose(hidden[0, :2], bilstm_forward(short, encoder), atol=1e-12)
        np.testing.assert_allclose(hidden[1], bilstm_forward(long, encoder), atol=1e-12)

    def test_layer_shapes_checked(self):
        with pytest.raises(ValueError, match="input size"):
            BiLSTMEncoder(
                [
                    LSTMLayerParams(zero_direction(3, 2), zero_direction(3, 2)),
                    LSTMLayerParams(zero_direction(3, 2), zero_direction(3, 2)),
                ]
            )
        with pytest.raises(ValueError, match="at least one layer"):
            BiLSTMEncoder([])

    def test_named_parameters(self):
        encoder = BiLSTMEncoder.init(3, 2, 2, np.random.default_rng(0), 0.01)
        names = list(encoder.named_parameters())
        assert len(names) == 12
        assert names[:3] == [f"encoder.layer0.fwd.{p}" for p in ("W_x", "W_h", "b")]
        assert "encoder.layer1.bwd.b" in names
        for value in encoder.named_parameters().values():
            assert np.all(np.abs(value) <= 0.01)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        encoder = BiLSTMEncoder.init(3, 2, 2, rng, 0.6)
        x = rng.normal(size=(2, 4, 3))
        mask = np.array([[True, True, True, False], [True, True, True, True]])
        weights = rng.normal(size=(2, 4, 4)) * mask[:, :, None]

        def loss() -> float:
            out, _ = bilstm_forward_batch(x, mask, encoder)
            return float((out * weights).sum())

        out, cache = bilstm_forward_batch(x, mask, encoder)
        grads = encoder.zeros_like()
        dx = bilstm_backward_batch(weights, cache, encoder, grads)

        step = 1e-6
        analytic = grads.named_parameters()
        for name, param in encoder.named_parameters().items():
            for index in [(0,) * param.ndim, tuple(s - 1 for s in param.shape)]:
                saved = param[index]
                param[index] = saved + step
                up = loss()
                param[index] = saved - step
                down = loss()
                param[index] = saved
                numeric = (up - down) / (2 * step)
                assert analytic[name][index] == pytest.approx(numeric, rel=1e-5, abs=1e-8), name
        for index in [(0, 0, 0), (1, 3, 2), (0, 2, 1)]:
            saved = x[index]
            x[index] = saved + step
            up = loss()
            x[index] = saved - step
            down = loss()
            x[index] = saved
            assert dx[index] == pytest.approx((up - down) / (2 * step), rel=1e-5, abs=1e-8)
        assert np.all(dx[0, 3] == 0.0)
