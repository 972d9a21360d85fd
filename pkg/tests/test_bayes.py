import itertools
import math
import time

import numpy as np
import pytest

from vge.bayes import PredictiveDistribution, mc_predict
from vge.exceptions import InsufficientSamples
from vge.nn.layers import LayerSpec
from vge.nn.model import init_model
from vge.nn.train import predict


def _dense_model(p, d=3, seed=0):
    model = init_model([LayerSpec("Dense", 1, p)], d, np.random.default_rng(seed))
    model.params[0]["W"] = np.array([[0.7, -1.3, 0.4]])
    model.params[0]["b"] = np.array([0.25])
    return model


def _exact_moments(W, b, x, p):
    """Mean, variance and fourth central moment by enumerating all masks."""
    keep = 1 - p
    outs, probs = [], []
    for bits in itertools.product([0, 1], repeat=len(x)):
        m = [bit / keep for bit in bits]
        outs.append(sum(w * xi * mi for w, xi, mi in zip(W, x, m)) + b)
        probs.append(math.prod(keep if bit else p for bit in bits))
    mu = sum(q * o for q, o in zip(probs, outs))
    var = sum(q * (o - mu) ** 2 for q, o in zip(probs, outs))
    mu4 = sum(q * (o - mu) ** 4 for q, o in zip(probs, outs))
    return mu, var, mu4


def test_matches_exact_moments_within_three_standard_errors():
    model = _dense_model(0.5)
    x = np.array([[[0.0, 0.0, 0.0], [1.0, 0.5, -2.0]],
                  [[0.0, 0.0, 0.0], [-0.3, 2.0, 0.8]]])
    M = 100_000
    start = time.perf_counter()
    dist = mc_predict(model, x, M, 123, reservoir=0)
    assert time.perf_counter() - start < 10
    for i in range(2):
        mu, var, mu4 = _exact_moments([0.7, -1.3, 0.4], 0.25, x[i, -1].tolist(), 0.5)
        assert abs(dist.mean[i] - mu) < 3 * math.sqrt(var / M)
        assert abs(dist.variance[i] - var) < 3 * math.sqrt((mu4 - var ** 2) / M)


def test_no_dropout_is_bit_exact():
    rng = np.random.default_rng(1)
    model = init_model([LayerSpec("GRU", 4), LayerSpec("Dense", 1)], 2, rng)
    x = rng.normal(size=(7, 5, 2))
    dist = mc_predict(model, x, 50, 0)
    assert np.array_equal(dist.mean, predict(model, x))
    assert np.all(dist.variance == 0.0)


def test_plug_in_identity_with_retained_samples():
    rng = np.random.default_rng(2)
    model = init_model([LayerSpec("LSTM", 4, 0.2), LayerSpec("Dense", 1, 0.1)], 2, rng)
    x = rng.normal(size=(6, 5, 2))
    dist = mc_predict(model, x, 64, 9, reservoir=64)
    assert dist.samples.shape == (64, 6)
    assert np.allclose(dist.mean, dist.samples.mean(axis=0), rtol=0, atol=1e-13)
    assert np.allclose(dist.variance, dist.samples.var(axis=0), rtol=0, atol=1e-13)


def test_seeded_and_chunk_independent():
    rng = np.random.default_rng(3)
    model = init_model([LayerSpec("SimpleRNN", 3, 0.2), LayerSpec("Dense", 1)], 1, rng)
    x = rng.normal(size=(10, 4, 1))
    a = mc_predict(model, x, 20, np.random.SeedSequence(5))
    b = mc_predict(model, x, 20, np.random.SeedSequence(5))
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.variance, b.variance)
    c = mc_predict(model, x, 20, np.random.SeedSequence(6))
    assert not np.array_equal(a.mean, c.mean)


def test_variance_grows_with_dropout_rate():
    x = np.array([[[1.0, 0.5, -2.0]]])
    v = [mc_predict(_dense_model(p), x, 4000, 0, reservoir=0).variance[0] for p in (0.1, 0.3, 0.5)]
    assert v[0] < v[1] < v[2]


def test_too_few_samples():
    with pytest.raises(InsufficientSamples):
        mc_predict(_dense_model(0.5), np.zeros((1, 1, 3)), 1)


def test_csv_round_trip(tmp_path):
    d = PredictiveDistribution(np.array([0.1, -2.5]), np.array([1e-3, 0.0]), 10)
    d.to_csv(tmp_path / "p.csv")
    back = PredictiveDistribution.from_csv(tmp_path / "p.csv")
    assert np.array_equal(back.mean, d.mean) and np.array_equal(back.variance, d.variance)


def test_single_linear_neuron_oracle():
    # w x = 2 behind a keep-1/2 scaled mask: outputs 0 or 4, mean 2, variance 4
    model = init_model([LayerSpec("Dense", 1, 0.5)], 1, np.random.default_rng(0))
    model.params[0]["W"][:] = 2.0
    model.params[0]["b"][:] = 0.0
    M = 100_000
    dist = mc_predict(model, np.ones((1, 1, 1)), M, 2024, reservoir=0)
    se_mean = math.sqrt(4.0 / M)
    # Var(s^2) = (mu4 - (M-3)/(M-1) sigma^4) / M with mu4 = sigma^4 = 16
    se_var = math.sqrt((16 - (M - 3) / (M - 1) * 16) / M)
    assert abs(dist.mean[0] - 2.0) < 3 * se_mean
    assert abs(dist.variance[0] * M / (M - 1) - 4.0) < 3 * se_var
