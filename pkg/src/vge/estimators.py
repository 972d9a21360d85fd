"""scikit-learn style estimators over the modelling core.

:class:`BayesianRNNRegressor` is a single dropout-Bayesian forecaster on
pre-built windows.  :class:`VGEAnomalyDetector` is the whole method on raw
channel matrices: scale, smooth, search K architectures, combine their
MC-dropout predictions and flag anomalies.

The module-level helpers are shared with the file-based CLI pipeline.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .bayes import mc_predict
from .dataset import WindowBatch, fit_scaler, make_windows
from .detect import DetectorConfig, detect, score, tune_tau
from .ensemble import combine_distributions
from .exceptions import NonFiniteInput, SeriesTooShort, ShapeMismatch
from .ga import GaConfig, SearchData, evolve
from .nn.layers import LayerSpec
from .nn.model import init_model
from .nn.optim import AdamConfig
from .nn.train import TrainConfig, predict, train
from .npy_io import as_matrix
from .preprocess import SmoothConfig, smooth


def sub_seed(root: np.random.SeedSequence, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + tuple(key))


def smooth_or_copy(series, cfg: SmoothConfig | None):
    return series.copy() if cfg is None else smooth(series, cfg)[0]


def split_windows(series, m: int, horizon: int = 1, target_col: int = 0,
                  val_fraction: float = 0.2):
    """Windows over a training series, the last ``val_fraction`` held out."""
    data = make_windows(series, m, horizon, target_col)
    n_val = int(round(len(data) * val_fraction))
    if val_fraction > 0 and n_val == 0:
        n_val = 1
    if len(data) - n_val < 1:
        raise SeriesTooShort("no training windows left after the validation split")
    idx = np.arange(len(data))
    return data.subset(idx[:len(data) - n_val]), data.subset(idx[len(data) - n_val:])


def forecast_windows(history, series, m: int, horizon: int = 1,
                     target_col: int = 0) -> WindowBatch:
    """One window per row of ``series``, primed with the tail of ``history``."""
    pad = m + horizon - 1
    history = as_matrix(history)
    if history.shape[0] < pad:
        raise SeriesTooShort(f"history has {history.shape[0]} rows, {pad} needed")
    return make_windows(np.vstack([history[-pad:], as_matrix(series)]), m, horizon, target_col)


def ensemble_predict(models, windows, mc_samples: int, seed: np.random.SeedSequence,
                     *, reservoir: int = 256, use_covariance: bool = True,
                     global_weights: bool = False, n_jobs: int = 1):
    """MC-dropout predict with every model, then combine.

    Model ``j`` draws its passes from ``sub_seed(seed, j)``, so the result
    does not depend on ``n_jobs``.
    """
    def one(j):
        return mc_predict(models[j], windows, mc_samples, sub_seed(seed, j),
                          reservoir=reservoir)
    if n_jobs > 1 and len(models) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            dists = list(ex.map(one, range(len(models))))
    else:
        dists = [one(j) for j in range(len(models))]
    return combine_distributions(dists, use_covariance=use_covariance,
                                 global_weights=global_weights), dists


def _check_windows(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim != 3:
        raise ShapeMismatch(f"expected windows of shape (B, T, N), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("windows contain NaN or Inf")
    if y is None:
        return X, None
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ShapeMismatch(f"{X.shape[0]} windows but {y.shape[0]} targets")
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("targets contain NaN or Inf")
    return X, y


class BayesianRNNRegressor(RegressorMixin, BaseEstimator):
    """Dropout-masked recurrent forecaster with MC-dropout uncertainty.

    ``layers`` is a sequence of ``(kind, units, dropout_p)``; the final
    ``Dense(1)`` output is appended with ``output_dropout``.
    """

    def __init__(self, layers=(("LSTM", 16, 0.1),), output_dropout=0.1, epochs=20,
                 batch_size=64, learning_rate=5e-3, weight_decay=1e-4, clip_norm=5.0,
                 mc_samples=100, random_state=0):
        self.layers = layers
        self.output_dropout = output_dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.mc_samples = mc_samples
        self.random_state = random_state

    def _specs(self):
        specs = [LayerSpec(k, int(u), float(p)) for k, u, p in self.layers]
        return specs + [LayerSpec("Dense", 1, float(self.output_dropout))]

    def fit(self, X, y):
        X, y = _check_windows(X, y)
        rng = np.random.default_rng(self.random_state)
        model = init_model(self._specs(), X.shape[2], rng)
        cfg = TrainConfig(self.epochs, self.batch_size, self.weight_decay,
                          AdamConfig(lr=self.learning_rate), self.clip_norm)
        data = WindowBatch(X, y, X.shape[1], 1)
        self.model_, self.loss_history_ = train(model, data, cfg, rng)
        self.n_features_in_ = X.shape[2]
        return self

    def predict(self, X):
        """Deterministic forecast with dropout off."""
        check_is_fitted(self, "model_")
        X, _ = _check_windows(X)
        return predict(self.model_, X)

    def predict_dist(self, X, mc_samples=None):
        check_is_fitted(self, "model_")
        X, _ = _check_windows(X)
        return mc_predict(self.model_, X, mc_samples or self.mc_samples,
                          sub_seed(np.random.SeedSequence(self.random_state), 1))


class VGEAnomalyDetector(BaseEstimator):
    """Genetically searched ensemble of Bayesian RNN forecasters.

    ``fit`` takes the (anomaly-free) training matrix of one channel,
    ``predict`` flags anomalies in a later matrix of the same channel and
    ``fit_tau`` tunes the waiting time on labeled segments.

    Parameters
    ----------
    window : int
        Input window length in rows.
    smooth : bool
        Feed the adaptive-window smoothed series to the networks.
    ga_config, train_config : GaConfig, TrainConfig or None
        Search and training settings; ``None`` uses desk-scale defaults.
    mc_samples : int
        MC-dropout passes per model.
    """

    def __init__(self, window=20, horizon=1, target_col=0, smooth=True, min_window=2,
                 max_window=64, sigma_mult=2.0, ga_config=None, train_config=None,
                 validation_fraction=0.2, mc_samples=100, band_k=3.0, tau_max=9,
                 min_tentative=3, use_covariance=True, random_state=0, n_jobs=1):
        self.window = window
        self.horizon = horizon
        self.target_col = target_col
        self.smooth = smooth
        self.min_window = min_window
        self.max_window = max_window
        self.sigma_mult = sigma_mult
        self.ga_config = ga_config
        self.train_config = train_config
        self.validation_fraction = validation_fraction
        self.mc_samples = mc_samples
        self.band_k = band_k
        self.tau_max = tau_max
        self.min_tentative = min_tentative
        self.use_covariance = use_covariance
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _smooth_cfg(self):
        return SmoothConfig(self.min_window, self.max_window, self.sigma_mult) if self.smooth else None

    def _detector(self, tau=None):
        return DetectorConfig(self.band_k, tau or getattr(self, "tau_", self.tau_max),
                              self.min_tentative)

    def fit(self, X, y=None):
        X = as_matrix(X)
        root = np.random.SeedSequence(self.random_state)
        self.scaler_ = fit_scaler(X)
        scaled = self.scaler_.apply(X)
        self.history_ = smooth_or_copy(scaled, self._smooth_cfg())
        tr, val = split_windows(self.history_, self.window, self.horizon, self.target_col,
                                self.validation_fraction)
        ga_cfg = self.ga_config or GaConfig(units_range=(8, 32), layers_range=(1, 2),
                                            dense_range=(0, 0), ni_range=(1, 2), np_range=(2, 3))
        ga_cfg = replace(ga_cfg, n_jobs=self.n_jobs)
        train_cfg = self.train_config or TrainConfig(epochs=20, batch_size=64,
                                                     adam=AdamConfig(lr=5e-3))
        self.search_ = evolve(SearchData(tr, val, None, train_cfg), ga_cfg, sub_seed(root, 1))
        self.models_ = [r.model for r in self.search_.best]
        self.tau_ = self.tau_max
        self.n_features_in_ = X.shape[1]
        return self

    def _raw_target(self, X):
        return self.scaler_.apply(X)[:, self.target_col]

    def predict_dist(self, X):
        """Ensemble predictive distribution for every row of ``X``."""
        check_is_fitted(self, "models_")
        scaled = self.scaler_.apply(as_matrix(X))
        inputs = smooth_or_copy(scaled, self._smooth_cfg())
        windows = forecast_windows(self.history_, inputs, self.window, self.horizon,
                                   self.target_col)
        ens, _ = ensemble_predict(self.models_, windows, self.mc_samples,
                                  sub_seed(np.random.SeedSequence(self.random_state), 2),
                                  use_covariance=self.use_covariance, n_jobs=self.n_jobs)
        return ens

    def decision_function(self, X):
        """Band score ``|y - mean| / sigma`` per row (scaled units)."""
        ens = self.predict_dist(X)
        return score(self._raw_target(X), ens.mean, ens.variance, self.band_k)[0]

    def predict(self, X):
        """Boolean anomaly label per row."""
        ens = self.predict_dist(X)
        return detect(self._raw_target(X), ens, self._detector()).labels()

    def fit_tau(self, X, segments, tau_grid=tuple(range(1, 31))):
        """Choose ``tau_`` on labeled data; returns the per-tau metrics."""
        ens = self.predict_dist(X)
        cfg = replace(self._detector(max(tau_grid)), tau_grid=tuple(tau_grid))
        self.tau_, per_tau = tune_tau(self._raw_target(X), ens, list(segments), cfg)
        return per_tau
