"""Channel assembly, scaling and sliding-window supervision."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    ColumnMismatch,
    EmptyInput,
    MissingFile,
    SeriesTooShort,
    UnlabeledChannel,
)
from .npy_io import LabelTable, as_matrix, load_npy

# Channels with no usable telemetry for evaluation (e.g. constant training
# values); they load normally but are dropped when aggregating metrics.
EXCLUDED_SIGNALS = frozenset({
    "P10", "M6", "E3", "A1", "D16", "D1", "D3", "F3", "A6", "P14",
    "D5", "G6", "P15", "G1", "M3", "R1", "D4", "P11", "M2", "D11",
})


def excluded_signals() -> frozenset[str]:
    return EXCLUDED_SIGNALS


def is_excluded(channel_id: str, exclusions=EXCLUDED_SIGNALS) -> bool:
    """Membership test tolerant of the dataset's ``M-6`` spelling of ``M6``."""
    return channel_id in exclusions or channel_id.replace("-", "") in exclusions


@dataclass(frozen=True)
class ChannelData:
    channel_id: str
    train: np.ndarray
    test: np.ndarray
    anomaly_segments: tuple[tuple[int, int], ...] = ()
    target_col: int = 0

    def __post_init__(self):
        if self.train.shape[1] != self.test.shape[1]:
            raise ColumnMismatch(
                f"{self.channel_id}: train has {self.train.shape[1]} columns, "
                f"test has {self.test.shape[1]}")
        if not 0 <= self.target_col < self.train.shape[1]:
            raise ValueError(f"target_col {self.target_col} out of range")
        n = self.test.shape[0]
        for start, end in self.anomaly_segments:
            if not 0 <= start <= end < n:
                raise ValueError(f"segment [{start}, {end}] outside test series of length {n}")

    @property
    def n_features(self) -> int:
        return self.train.shape[1]

    def test_labels(self) -> np.ndarray:
        labels = np.zeros(self.test.shape[0], dtype=bool)
        for start, end in self.anomaly_segments:
            labels[start:end + 1] = True
        return labels


def load_channel(root, channel_id: str, labels: LabelTable) -> ChannelData:
    """Load ``<root>/train/<id>.npy`` and ``<root>/test/<id>.npy``."""
    entry = labels.get(channel_id)
    if entry is None:
        raise UnlabeledChannel(channel_id)
    paths = [os.path.join(root, split, f"{channel_id}.npy") for split in ("train", "test")]
    for path in paths:
        if not os.path.isfile(path):
            raise MissingFile(path)
    train, test = (load_npy(p) for p in paths)
    return ChannelData(channel_id, train, test, entry.anomaly_segments, target_col=0)


@dataclass(frozen=True)
class Scaler:
    data_min: np.ndarray
    data_max: np.ndarray

    def apply(self, m) -> np.ndarray:
        m = as_matrix(m)
        span = self.data_max - self.data_min
        out = np.zeros_like(m)
        ok = span > 0
        out[:, ok] = 2.0 * (m[:, ok] - self.data_min[ok]) / span[ok] - 1.0
        return out

    def invert(self, m) -> np.ndarray:
        m = as_matrix(m)
        span = self.data_max - self.data_min
        out = np.repeat(self.data_min[None, :], m.shape[0], axis=0)
        ok = span > 0
        out[:, ok] = (m[:, ok] + 1.0) * span[ok] / 2.0 + self.data_min[ok]
        return out

    def to_dict(self):
        return {"data_min": self.data_min.tolist(), "data_max": self.data_max.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["data_min"], float), np.asarray(d["data_max"], float))


def fit_scaler(train) -> Scaler:
    """Per-column min/max of the training matrix; maps train range to [-1, 1]."""
    train = np.asarray(train, dtype=float)
    if train.size == 0:
        raise EmptyInput("cannot fit a scaler on an empty matrix")
    train = as_matrix(train)
    return Scaler(train.min(axis=0), train.max(axis=0))


def apply(scaler: Scaler, m) -> np.ndarray:
    return scaler.apply(m)


class SignalScaler(TransformerMixin, BaseEstimator):
    """Min-max scaler to [-1, 1]; constant columns map to 0.

    Unlike ``sklearn.preprocessing.MinMaxScaler`` this does not clip and
    maps degenerate columns to exactly zero rather than to the lower bound.
    """

    def fit(self, X, y=None):
        self.scaler_ = fit_scaler(X)
        self.n_features_in_ = self.scaler_.data_min.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "scaler_")
        return self.scaler_.apply(X)

    def inverse_transform(self, X):
        check_is_fitted(self, "scaler_")
        return self.scaler_.invert(X)


@dataclass(frozen=True)
class WindowBatch:
    """Supervised pairs: ``inputs[b]`` is ``series[b:b+m]`` and
    ``targets[b]`` is ``series[b+m+horizon-1, target_col]``.

    ``inputs`` is a read-only strided view; index it to materialize batches.
    """

    inputs: np.ndarray   # (B, m, N)
    targets: np.ndarray  # (B,)
    window_len: int
    horizon: int

    def __len__(self):
        return self.targets.shape[0]

    def subset(self, idx) -> "WindowBatch":
        return WindowBatch(np.ascontiguousarray(self.inputs[idx]), self.targets[idx],
                           self.window_len, self.horizon)


def make_windows(series, m: int, horizon: int = 1, target_col: int = 0) -> WindowBatch:
    series = as_matrix(series)
    if m < 1 or horizon < 1:
        raise ValueError("window length and horizon must be >= 1")
    rows = series.shape[0]
    if rows < m + horizon:
        raise SeriesTooShort(f"{rows} rows < window {m} + horizon {horizon}")
    n_pairs = rows - m - horizon + 1
    # sliding_window_view yields (rows-m+1, N, m); move time axis forward
    view = sliding_window_view(series, m, axis=0)[:n_pairs].transpose(0, 2, 1)
    targets = series[m + horizon - 1:, target_col].copy()
    return WindowBatch(view, targets, m, horizon)
