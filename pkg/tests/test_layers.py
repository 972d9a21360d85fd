import math

import numpy as np
import pytest

from oracles import gru_ref, lstm_ref, rnn_ref
from vge.exceptions import ShapeMismatch
from vge.nn.layers import (LayerSpec, forward_dense, forward_gru, forward_lstm,
                           forward_simple_rnn, init_params, param_shapes)

N, U, T = 3, 4, 6


def _params(kind, rng, scale=0.8):
    return {k: rng.normal(0, scale, s) for k, s in param_shapes(LayerSpec(kind, U), N).items()}


def _mask(rng, d):
    return (rng.random(d) < 0.7) / 0.7


@pytest.mark.parametrize("seed", range(5))
def test_simple_rnn_matches_textbook(seed):
    rng = np.random.default_rng(seed)
    p, x = _params("SimpleRNN", rng), rng.normal(size=(T, N))
    mx, mh = _mask(rng, N), _mask(rng, U)
    ours = forward_simple_rnn(p, x, masks={"x": mx, "h": mh})
    ref = rnn_ref(p, x.tolist(), mx.tolist(), mh.tolist())
    assert np.max(np.abs(ours - np.array(ref))) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_lstm_matches_textbook(seed):
    rng = np.random.default_rng(seed)
    p, x = _params("LSTM", rng), rng.normal(size=(T, N))
    mx, mh, mc = _mask(rng, N), _mask(rng, U), _mask(rng, U)
    ours = forward_lstm(p, x, masks={"x": mx, "h": mh, "c": mc})
    ref = lstm_ref(p, x.tolist(), mx.tolist(), mh.tolist(), mc.tolist())
    assert np.max(np.abs(ours - np.array(ref))) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_gru_matches_textbook(seed):
    rng = np.random.default_rng(seed)
    p, x = _params("GRU", rng), rng.normal(size=(T, N))
    mx, mh = _mask(rng, N), _mask(rng, U)
    ours = forward_gru(p, x, masks={"x": mx, "h": mh})
    ref = gru_ref(p, x.tolist(), mx.tolist(), mh.tolist())
    assert np.max(np.abs(ours - np.array(ref))) < 1e-12


def test_batched_equals_per_sequence():
    rng = np.random.default_rng(9)
    p = _params("LSTM", rng)
    x = rng.normal(size=(5, T, N))
    masks = {"x": _mask(rng, (5, N)), "h": _mask(rng, (5, U)), "c": _mask(rng, (5, U))}
    H = forward_lstm(p, x, masks=masks)
    for b in range(5):
        one = forward_lstm(p, x[b], masks={k: v[b] for k, v in masks.items()})
        assert np.max(np.abs(H[b] - one)) < 1e-13


def test_scalar_hand_cases():
    # simple RNN, one unit: h_t = sigmoid(x_t + 0 * h_{t-1})
    p = {"W_h": np.array([[1.0, 0.0]]), "b_h": np.zeros(1), "W_y": np.eye(1), "b_y": np.zeros(1)}
    H = forward_simple_rnn(p, np.array([[0.0], [2.0]]))
    assert H[:, 0].tolist() == [0.5, 1 / (1 + math.exp(-2.0))]
    # LSTM with zero weights: gates 1/2, candidate tanh(b_c) = 1/2
    p = {f"W_{g}": np.zeros((1, 2)) for g in "ifoc"}
    p.update({f"b_{g}": np.zeros(1) for g in "ifo"})
    p["b_c"] = np.array([math.atanh(0.5)])
    H = forward_lstm(p, np.zeros((2, 1)))
    assert H[:, 0] == pytest.approx([0.5 * math.tanh(0.25), 0.5 * math.tanh(0.375)], abs=1e-15)


@pytest.mark.parametrize("kind,fwd", [("SimpleRNN", None), ("LSTM", forward_lstm),
                                      ("GRU", forward_gru)])
def test_zero_fixed_points(kind, fwd):
    p = {k: np.zeros(s) for k, s in param_shapes(LayerSpec(kind, U), N).items()}
    x = np.zeros((T, N))
    if kind == "SimpleRNN":
        assert np.all(forward_simple_rnn(p, x) == 0.5)
    else:
        assert np.all(fwd(p, x) == 0.0)


@pytest.mark.parametrize("kind,fwd", [("SimpleRNN", forward_simple_rnn), ("LSTM", forward_lstm),
                                      ("GRU", forward_gru)])
def test_zero_input_mask_removes_input(kind, fwd):
    rng = np.random.default_rng(3)
    p = _params(kind, rng)
    masks = {"x": np.zeros(N), "h": np.ones(U)}
    a = fwd(p, rng.normal(size=(T, N)), masks=masks)
    b = fwd(p, rng.normal(size=(T, N)) * 100, masks=masks)
    assert np.array_equal(a, b)


def test_dense_dropped_input_is_ignored():
    rng = np.random.default_rng(4)
    p = {"W": rng.normal(size=(2, 5)), "b": rng.normal(size=2)}
    x = rng.normal(size=5)
    m = np.array([2.0, 0.0, 2.0, 0.0, 2.0])
    y = forward_dense(p, x, m)
    x2 = x.copy()
    x2[[1, 3]] += 1e6
    assert np.array_equal(forward_dense(p, x2, m), y)
    assert np.allclose(y, p["W"] @ (x * m) + p["b"], atol=1e-12)
    x3 = x.copy()
    x3[0] += 1e-3
    assert not np.array_equal(forward_dense(p, x3, m), y)


def test_shape_errors():
    rng = np.random.default_rng(0)
    p = _params("GRU", rng)
    with pytest.raises(ShapeMismatch):
        forward_gru(p, np.zeros((T, N + 1)))
    with pytest.raises(ShapeMismatch):
        forward_gru(p, np.zeros((T, N)), masks={"x": np.ones(N + 2)})


def test_init_params_ranges():
    rng = np.random.default_rng(0)
    p = init_params(LayerSpec("LSTM", 8), 3, rng)
    bound = 1 / math.sqrt(11)
    assert all(np.all(np.abs(p[f"W_{g}"]) <= bound) for g in "ifoc")
    assert np.all(p["b_f"] == 1.0) and np.all(p["b_i"] == 0.0)
    with pytest.raises(ValueError):
        LayerSpec("Conv", 3)
    with pytest.raises(ValueError):
        LayerSpec("GRU", 3, 1.0)
