"""Inverse-variance combination of K predictive distributions.

Per timestep, model ``j`` gets weight ``w_j = 1 / sigma_j^2``, the
ensemble mean is ``sum(w_j * mean_j) / phi`` with ``phi = sum(w_j)``, and
the ensemble variance is::

    1/phi + 2/phi^2 * sum_{i<j} w_i w_j cov(y_i, y_j)

The first term is exact for ``w_j = 1/sigma_j^2`` since
``sum(w_j^2 sigma_j^2) / phi^2 = 1/phi``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptySet, InsufficientSamples, LengthMismatch

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-8


@dataclass
class EnsembleOutput:
    mean: np.ndarray
    variance: np.ndarray
    weights: np.ndarray          # (K, n)
    phi: np.ndarray              # (n,)
    cross_terms: dict = field(default_factory=dict)  # (i, j) -> w_i w_j cov, (n,)

    def __len__(self):
        return self.mean.shape[0]

    @property
    def std(self):
        return np.sqrt(self.variance)

    def to_csv(self, path, offset: int = 0) -> None:
        K = self.weights.shape[0]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "mean", "variance"] + [f"w_{j + 1}" for j in range(K)])
            for t in range(len(self)):
                w.writerow([t + offset, repr(float(self.mean[t])), repr(float(self.variance[t]))]
                           + [repr(float(self.weights[j, t])) for j in range(K)])

    @classmethod
    def from_csv(cls, path) -> "EnsembleOutput":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in r] for r in reader]
        arr = np.array(rows, dtype=float).reshape(-1, len(header))
        weights = arr[:, 3:].T
        return cls(arr[:, 1], arr[:, 2], weights, weights.sum(axis=0))


def estimate_covariance(samples_i, samples_j, axis: int = 0):
    """Plug-in covariance of paired MC samples (sample ``s`` with ``s``)."""
    a = np.asarray(samples_i, dtype=float)
    b = np.asarray(samples_j, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"paired samples differ in shape: {a.shape} vs {b.shape}")
    if a.shape[axis] < 2:
        raise InsufficientSamples("covariance needs at least 2 paired samples")
    da = a - a.mean(axis=axis, keepdims=True)
    db = b - b.mean(axis=axis, keepdims=True)
    out = (da * db).mean(axis=axis)
    return float(out) if np.ndim(out) == 0 else out


def combine(means, variances, samples=None, covariances=None, *,
            floor: float = VARIANCE_FLOOR, global_weights: bool = False) -> EnsembleOutput:
    """Combine per-model mean/variance series.

    Parameters
    ----------
    means, variances : sequences of K arrays of equal length
    samples : optional sequence of K arrays ``(R, n)`` of paired MC passes,
        used to estimate the cross-model covariance.
    covariances : optional mapping ``(i, j) -> cov`` (scalar or length-n
        array) overriding ``samples``.  Missing pairs count as 0.
    global_weights : use one weight per model from its mean variance over
        the span instead of per-timestep weights.
    """
    means = [np.asarray(m, dtype=float).ravel() for m in means]
    variances = [np.asarray(v, dtype=float).ravel() for v in variances]
    K = len(means)
    if K == 0:
        raise EmptySet("no models to combine")
    if len(variances) != K:
        raise LengthMismatch("one variance series per model is required")
    n = means[0].shape[0]
    if any(m.shape[0] != n for m in means) or any(v.shape[0] != n for v in variances):
        raise LengthMismatch("all mean/variance series must have equal length")
    if any(np.any(v < 0) for v in variances):
        raise ValueError("variances must be non-negative")

    var = np.maximum(np.vstack(variances), floor)
    if global_weights:
        var = np.repeat(var.mean(axis=1, keepdims=True), n, axis=1)
    w = 1.0 / var
    phi = w.sum(axis=0)
    if K == 1:
        # w*m/w and 1/(1/v) are not exact in floating point
        return EnsembleOutput(means[0].copy(), variances[0].copy(), w, phi, {})
    mean = (w * np.vstack(means)).sum(axis=0) / phi

    cross = {}
    if covariances is None and samples is not None and K > 1:
        samples = [np.asarray(s, dtype=float) for s in samples]
        covariances = {(i, j): estimate_covariance(samples[i], samples[j])
                       for i in range(K) for j in range(i + 1, K)}
    elif covariances is None and K > 1:
        logger.warning("no paired samples; assuming zero cross-model covariance")
    for i in range(K):
        for j in range(i + 1, K):
            cov = 0.0 if covariances is None else covariances.get((i, j), 0.0)
            cross[(i, j)] = w[i] * w[j] * np.broadcast_to(np.asarray(cov, float), (n,))

    variance = 1.0 / phi
    if cross:
        variance = variance + 2.0 / phi ** 2 * sum(cross.values())
    bad = variance < 0
    if np.any(bad):
        logger.warning("negative ensemble variance at %d points; clamping", int(bad.sum()))
        variance = np.where(bad, 0.01 / phi, variance)
    return EnsembleOutput(mean, variance, w, phi, cross)


def combine_distributions(dists, *, use_covariance: bool = True, **kwargs) -> EnsembleOutput:
    """Convenience wrapper over :func:`combine` for ``PredictiveDistribution``s."""
    samples = None
    if use_covariance and all(d.samples is not None for d in dists):
        R = min(d.samples.shape[0] for d in dists)
        if R >= 2:
            samples = [d.samples[:R] for d in dists]
    return combine([d.mean for d in dists], [d.variance for d in dists], samples, **kwargs)
