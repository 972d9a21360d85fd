"""Monte Carlo dropout predictive moments.

Each of ``M`` passes draws fresh per-window dropout masks and runs the
network; the predictive mean is the sample mean and the predictive
variance is the plug-in second moment minus the squared mean.  Sums are
accumulated relative to the first pass (shifted data) with Kahan
compensation, so identical passes give exactly zero variance and a mean
equal to the deterministic prediction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientSamples
from .nn.model import RnnModel, draw_masks, forward_model


@dataclass
class PredictiveDistribution:
    mean: np.ndarray
    variance: np.ndarray
    num_samples: int
    samples: np.ndarray | None = None  # (R, n) retained raw passes

    def __len__(self):
        return self.mean.shape[0]

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def to_csv(self, path, offset: int = 0) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "mean", "variance"])
            for t, (m, v) in enumerate(zip(self.mean, self.variance), start=offset):
                w.writerow([t, repr(float(m)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, num_samples: int = 0) -> "PredictiveDistribution":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        mean = np.array([float(r["mean"]) for r in rows])
        var = np.array([float(r["variance"]) for r in rows])
        return cls(mean, var, num_samples)


class _Kahan:
    def __init__(self, shape):
        self.sum = np.zeros(shape)
        self.comp = np.zeros(shape)

    def add(self, x):
        y = x - self.comp
        t = self.sum + y
        self.comp = (t - self.sum) - y
        self.sum = t


def sample_rng(seed_seq: np.random.SeedSequence, index: int) -> np.random.Generator:
    """Independent stream for pass ``index``, split from ``seed_seq``."""
    child = np.random.SeedSequence(seed_seq.entropy,
                                   spawn_key=tuple(seed_seq.spawn_key) + (index,))
    return np.random.default_rng(child)


def mc_pass(model: RnnModel, inputs, rng: np.random.Generator,
            chunk_size: int = 4096) -> np.ndarray:
    """One stochastic forward pass over every window."""
    n = inputs.shape[0]
    out = np.empty(n)
    for start in range(0, n, chunk_size):
        x = np.ascontiguousarray(inputs[start:start + chunk_size])
        masks = draw_masks(model, x.shape[0], rng)
        out[start:start + x.shape[0]] = forward_model(model, x, masks)
    return out


def mc_predict(model: RnnModel, windows, M: int = 1000, rng=None, *,
               reservoir: int = 256, chunk_size: int = 4096) -> PredictiveDistribution:
    """Predictive mean and variance from ``M`` MC-dropout passes.

    ``windows`` is a :class:`~vge.dataset.WindowBatch` or an input array of
    shape ``(B, T, N)``.  The first ``reservoir`` passes are kept in
    ``samples`` so that sample ``s`` of two models can be paired.
    ``rng`` may be an int seed, a ``SeedSequence`` or ``None``.
    """
    if M < 2:
        raise InsufficientSamples(f"need at least 2 MC samples, got {M}")
    inputs = getattr(windows, "inputs", windows)
    if isinstance(rng, np.random.SeedSequence):
        root = rng
    elif isinstance(rng, np.random.Generator):
        root = np.random.SeedSequence(int(rng.integers(2**63)))
    else:
        root = np.random.SeedSequence(rng)
    n = inputs.shape[0]
    kept = np.empty((min(reservoir, M), n))
    s1 = _Kahan(n)
    s2 = _Kahan(n)
    first = None
    for s in range(M):
        y = mc_pass(model, inputs, sample_rng(root, s), chunk_size)
        if s < kept.shape[0]:
            kept[s] = y
        if first is None:
            first = y
        d = y - first
        s1.add(d)
        s2.add(d * d)
    mean_shift = s1.sum / M
    mean = first + mean_shift
    variance = np.maximum(s2.sum / M - mean_shift * mean_shift, 0.0)
    return PredictiveDistribution(mean, variance, M, kept)
