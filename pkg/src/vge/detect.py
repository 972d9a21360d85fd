"""Uncertainty-band scoring, tentative-point flagging and waiting-time tuning."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .evaluation import confusion, mean_squared_error, metrics
from .exceptions import LengthMismatch, NoLabels

EPS = 1e-8


@dataclass(frozen=True)
class DetectorConfig:
    band_k: float = 3.0
    tau_max: int = 9
    min_tentative: int = 3
    tau_grid: tuple[int, ...] = tuple(range(1, 31))

    def __post_init__(self):
        if not self.band_k > 0:
            raise ValueError("band_k must be > 0")
        if self.tau_max < 1 or self.min_tentative < 1:
            raise ValueError("tau_max and min_tentative must be >= 1")
        if self.min_tentative > self.tau_max:
            raise ValueError("min_tentative must not exceed tau_max")


@dataclass
class DetectionResult:
    scores: np.ndarray
    tentative: np.ndarray
    segments: list[tuple[int, int]]
    tau_used: int
    tau_metrics: dict = field(default_factory=dict)

    def labels(self) -> np.ndarray:
        out = np.zeros(len(self.scores), dtype=bool)
        for s, e in self.segments:
            out[s:e + 1] = True
        return out

    def to_dict(self):
        return {
            "tau_used": self.tau_used,
            "segments": [list(s) for s in self.segments],
            "n_tentative": int(np.sum(self.tentative)),
            "scores": [float(v) for v in self.scores],
            "tentative": [bool(v) for v in self.tentative],
            "tau_metrics": {str(k): v for k, v in self.tau_metrics.items()},
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_json(cls, path) -> "DetectionResult":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(np.asarray(d["scores"], float), np.asarray(d["tentative"], bool),
                   [tuple(s) for s in d["segments"]], d["tau_used"],
                   {int(k): v for k, v in d.get("tau_metrics", {}).items()})


def write_segments_csv(segments, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start", "end"])
        w.writerows([[s, e] for s, e in segments])


def score(y, mean, variance, band_k: float = 3.0, eps: float = EPS):
    """``|y - mean| / (sqrt(variance) + eps)`` and the ``> band_k`` flags."""
    y = np.asarray(y, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float).ravel()
    variance = np.asarray(variance, dtype=float).ravel()
    if not y.shape == mean.shape == variance.shape:
        raise LengthMismatch(f"lengths differ: {y.shape}, {mean.shape}, {variance.shape}")
    if np.any(variance < 0):
        raise ValueError("variance must be non-negative")
    s = np.abs(y - mean) / (np.sqrt(variance) + eps)
    return s, s > band_k


def flag(tentative, cfg: DetectorConfig) -> list[tuple[int, int]]:
    """Turn tentative points into anomaly segments.

    Scanning left to right, the first tentative point opens a window of
    ``tau_max`` points.  With at least ``min_tentative`` tentative points in
    it, a segment is emitted from the first to the last tentative point,
    extended while the next tentative point lies within ``tau_max`` of the
    last one.  Otherwise the window is discarded and the scan resumes after
    it.
    """
    return _flag(tentative, cfg.tau_max, cfg.min_tentative)


def _flag(tentative, tau: int, q: int):
    idx = np.flatnonzero(np.asarray(tentative, dtype=bool))
    segments = []
    k = 0
    while k < len(idx):
        start = idx[k]
        in_window = np.searchsorted(idx, start + tau, side="left") - k
        if in_window < q:
            k = int(np.searchsorted(idx, start + tau, side="left"))
            continue
        j = k + in_window - 1
        while j + 1 < len(idx) and idx[j + 1] - idx[j] < tau:
            j += 1
        segments.append((int(start), int(idx[j])))
        k = j + 1
    return segments


def _y_mean_var(pred):
    return pred.mean, pred.variance


def detect(y, pred, cfg: DetectorConfig) -> DetectionResult:
    mean, var = _y_mean_var(pred)
    s, tent = score(y, mean, var, cfg.band_k)
    return DetectionResult(s, tent, flag(tent, cfg), cfg.tau_max)


def tune_tau(y, pred, labels, cfg: DetectorConfig):
    """Grid search over ``cfg.tau_grid``.

    Returns ``(tau_opt, per_tau)`` where ``per_tau[tau]`` is the metric dict
    for that waiting time and ``tau_opt`` is the smallest tau reaching the
    best F1.
    """
    if labels is None:
        raise NoLabels("tau tuning needs labeled anomaly segments")
    if not cfg.tau_grid:
        raise ValueError("tau_grid is empty")
    mean, var = _y_mean_var(pred)
    n = len(mean)
    _, tent = score(y, mean, var, cfg.band_k)
    mse = mean_squared_error(y, mean)
    per_tau = {}
    for tau in sorted(set(cfg.tau_grid)):
        # tau < q can never gather q tentative points: no segments
        segs = _flag(tent, tau, cfg.min_tentative)
        per_tau[tau] = metrics(confusion(segs, labels, n), mse).to_dict()
    best = max(m["f1"] for m in per_tau.values())
    tau_opt = min(t for t, m in per_tau.items() if m["f1"] == best)
    return tau_opt, per_tau
