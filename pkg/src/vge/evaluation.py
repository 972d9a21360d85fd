"""Point-wise confusion counts, detection metrics and channel aggregation."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import EXCLUDED_SIGNALS, is_excluded
from .exceptions import AllExcluded, SegmentOutOfRange

# Published full-scale scores, carried into reports for side-by-side reading.
REFERENCE_SCORES = {
    "SMAP": {"f1": 0.92, "accuracy": 0.92, "precision": 0.89, "recall": 0.92, "mse": 0.02},
    "MSL": {"f1": 0.84, "accuracy": 0.79, "precision": 0.80, "recall": 0.89, "mse": 0.09},
}

REPORT_COLUMNS = ("method", "dataset", "accuracy", "precision", "recall")


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp,
                         self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricSet:
    precision: float
    recall: float
    f1: float
    accuracy: float
    mse: float | None = None

    def to_dict(self):
        return asdict(self)


def segments_to_labels(segments, n: int) -> np.ndarray:
    labels = np.zeros(n, dtype=bool)
    for start, end in segments:
        if not 0 <= start <= end < n:
            raise SegmentOutOfRange(f"segment [{start}, {end}] outside [0, {n})")
        labels[start:end + 1] = True
    return labels


def labels_to_segments(labels) -> list[tuple[int, int]]:
    labels = np.asarray(labels, dtype=bool)
    if labels.size == 0:
        return []
    padded = np.concatenate([[False], labels, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return [(int(s), int(e) - 1) for s, e in zip(edges[::2], edges[1::2])]


def point_adjust(pred, truth) -> np.ndarray:
    """Mark a whole true segment as detected when any of its points is."""
    pred = np.asarray(pred, dtype=bool).copy()
    for start, end in labels_to_segments(truth):
        if pred[start:end + 1].any():
            pred[start:end + 1] = True
    return pred


def confusion(predicted, truth, series_len: int, *, adjust: bool = False) -> Confusion:
    """Point-wise confusion of predicted vs true anomaly segments."""
    pred = segments_to_labels(predicted, series_len)
    true = segments_to_labels(truth, series_len)
    if adjust:
        pred = point_adjust(pred, true)
    return confusion_from_labels(pred, true)


def confusion_from_labels(pred, true) -> Confusion:
    pred = np.asarray(pred, dtype=bool)
    true = np.asarray(true, dtype=bool)
    return Confusion(int(np.sum(pred & true)), int(np.sum(pred & ~true)),
                     int(np.sum(~pred & true)), int(np.sum(~pred & ~true)))


def f1_harmonic(precision: float, recall: float) -> float:
    """F1 from ``1/F1 = (1/precision + 1/recall) / 2``; 0 if either is 0."""
    if precision <= 0 or recall <= 0:
        return 0.0
    return 1.0 / ((1.0 / precision + 1.0 / recall) / 2.0)


def metrics(c: Confusion, mse: float | None = None) -> MetricSet:
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    accuracy = (c.tp + c.tn) / c.total if c.total else 0.0
    return MetricSet(precision, recall, f1_harmonic(precision, recall), accuracy, mse)


def mean_squared_error(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    return float(np.mean((y - y_hat) ** 2))


def aggregate(per_channel, exclusions=EXCLUDED_SIGNALS) -> MetricSet:
    """Micro-average: sum confusions over kept channels, average their MSE.

    ``per_channel`` holds ``(channel_id, Confusion, mse)`` triples; ``mse``
    may be ``None``.
    """
    kept = [(cid, c, m) for cid, c, m in per_channel if not is_excluded(cid, exclusions)]
    if not kept:
        raise AllExcluded("no channels left after exclusion")
    total = Confusion()
    for _, c, _ in kept:
        total = total + c
    mses = [m for _, _, m in kept if m is not None]
    return metrics(total, float(np.mean(mses)) if mses else None)


def report_row(method: str, dataset: str, m: MetricSet) -> dict:
    return {"method": method, "dataset": dataset, "accuracy": m.accuracy,
            "precision": m.precision, "recall": m.recall}


def write_report_rows(rows, csv_path=None, json_path=None) -> None:
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows([{k: r[k] for k in REPORT_COLUMNS} for r in rows])
    if json_path:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump([{k: r[k] for k in REPORT_COLUMNS} for r in rows], fh, indent=2)
