import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vge.estimators import (BayesianRNNRegressor, VGEAnomalyDetector, forecast_windows,
                            split_windows)
from vge.exceptions import ShapeMismatch
from vge.ga import GaConfig
from vge.nn.train import TrainConfig
from vge.synthetic import make_synthetic


def _windows(n=200, m=8, seed=0):
    rng = np.random.default_rng(seed)
    s = np.sin(np.arange(n + m) / 4.0) + rng.normal(0, 0.02, n + m)
    X = np.lib.stride_tricks.sliding_window_view(s[:-1], m)[:n]
    return X, s[m:m + n]


def test_regressor_fits_and_scores():
    X, y = _windows()
    est = BayesianRNNRegressor(layers=(("GRU", 8, 0.0),), output_dropout=0.0, epochs=40,
                               learning_rate=1e-2, random_state=1).fit(X, y)
    assert est.score(X, y) > 0.9
    dist = est.predict_dist(X[:5], mc_samples=10)
    assert np.array_equal(dist.mean, est.predict(X[:5])) and np.all(dist.variance == 0)


def test_regressor_params_and_errors():
    est = BayesianRNNRegressor(epochs=1)
    assert clone(est).get_params()["epochs"] == 1
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((2, 3)))
    with pytest.raises(ShapeMismatch):
        est.fit(np.zeros((4, 3)), np.zeros(5))


def test_split_and_forecast_windows():
    s = np.arange(30, dtype=float)[:, None]
    tr, val = split_windows(s, 5, 1, 0, 0.2)
    assert len(tr) + len(val) == 25 and len(val) == 5
    assert val.targets[-1] == 29.0
    w = forecast_windows(s, np.array([[100.0], [101.0]]), 5)
    assert w.targets.tolist() == [100.0, 101.0]
    assert w.inputs[0, :, 0].tolist() == [25, 26, 27, 28, 29]


def test_anomaly_detector_end_to_end():
    ch = make_synthetic(seed=3, n_train=600, n_test=800, n_anomalies=3, min_gap=80)
    det = VGEAnomalyDetector(window=10, max_window=5, mc_samples=20, random_state=0,
                             ga_config=GaConfig(units_range=(8, 8), layers_range=(1, 1),
                                                dense_range=(0, 0), ni_range=(1, 1),
                                                np_range=(1, 1)),
                             train_config=TrainConfig(epochs=8, batch_size=64))
    det.fit(ch.train)
    assert len(det.models_) == 2
    scores = det.decision_function(ch.test)
    assert scores.shape == (800,)
    per_tau = det.fit_tau(ch.test, ch.anomaly_segments, tau_grid=range(1, 10))
    assert det.tau_ in per_tau
    labels = det.predict(ch.test)
    assert labels.dtype == bool and labels.shape == (800,)
    again = clone(det).fit(ch.train)
    assert np.array_equal(again.decision_function(ch.test), scores)
