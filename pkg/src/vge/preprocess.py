"""Adaptive variable-length window smoothing.

Each output point ``x(t)`` is a weighted average of the points in a window
centred on ``t``.  The window starts as ``{t}`` and grows outward one point
per side per step.  A candidate point is admitted while the gap that joins
it to the window, ``e = ||z(p) - z(p')||_2`` (``p'`` its already-admitted
neighbour), stays strictly below the threshold ``mu + sigma_mult * sigma``
of the gaps inside the current window.  Admitted points get weight
``exp(-e)``; the centre has weight 1.  A side stops at its first rejected
candidate, at the series boundary, or when the window reaches
``max_window`` points.

The gap statistics are taken over the window widened to at least the seed
radius ``min_window // 2``, so the first step already has a reference.
A zero gap is never abrupt and is always admitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import EmptyWindow, NonFiniteInput


@dataclass(frozen=True)
class SmoothConfig:
    min_window: int = 2
    max_window: int = 64
    sigma_mult: float = 2.0

    def __post_init__(self):
        if self.min_window < 2:
            raise ValueError("min_window must be >= 2")
        if self.max_window < self.min_window:
            raise ValueError("max_window must be >= min_window")
        if not self.sigma_mult > 0:
            raise ValueError("sigma_mult must be > 0")


@dataclass
class SmoothTrace:
    """Per-timestep window bookkeeping.

    ``weights[t]`` lists gamma for every window position from
    ``bounds[t][0]`` to ``bounds[t][1]`` inclusive.
    """

    window_len: np.ndarray
    bounds: np.ndarray
    weights: list = field(default_factory=list)
    alpha: np.ndarray | None = None

    def to_dict(self):
        return {
            "window_len": self.window_len.tolist(),
            "bounds": self.bounds.tolist(),
            "weights": [w.tolist() for w in self.weights],
            "alpha": self.alpha.tolist(),
        }


def window_threshold(diff_norms, sigma_mult: float = 2.0) -> float:
    """``mean + sigma_mult * std`` (population std) of the gap norms."""
    d = np.asarray(diff_norms, dtype=float)
    if d.size == 0:
        raise EmptyWindow("threshold of an empty window")
    return float(d.mean() + sigma_mult * d.std())


def _window(gaps, t, lo, hi, r0, n, cfg):
    """Grow the window around ``t``; returns (lo, hi, gamma dict)."""
    gamma = {t: 1.0}
    left_open = right_open = True
    while left_open or right_open:
        ref_lo, ref_hi = max(min(lo, t - r0), 0), min(max(hi, t + r0), n - 1)
        # gaps[i] joins points i-1 and i
        ref = gaps[ref_lo + 1:ref_hi + 1]
        e_th = window_threshold(ref, cfg.sigma_mult) if ref.size else 0.0
        for side in ("left", "right"):
            if side == "left" and not left_open or side == "right" and not right_open:
                continue
            if hi - lo + 1 >= cfg.max_window:
                left_open = right_open = False
                break
            if side == "left":
                p = lo - 1
                if p < 0:
                    left_open = False
                    continue
                e = gaps[lo]
            else:
                p = hi + 1
                if p >= n:
                    right_open = False
                    continue
                e = gaps[p]
            if e == 0.0 or e < e_th:
                gamma[p] = math.exp(-e)
                if side == "left":
                    lo = p
                else:
                    hi = p
            elif side == "left":
                left_open = False
            else:
                right_open = False
    return lo, hi, gamma


def smooth(Z, cfg: SmoothConfig | None = None):
    """Smooth a ``(T, N)`` series; returns ``(X, trace)``."""
    cfg = cfg or SmoothConfig()
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if not np.all(np.isfinite(Z)):
        raise NonFiniteInput("smooth requires finite input")
    n = Z.shape[0]
    X = np.empty_like(Z)
    gaps = np.zeros(n)
    if n > 1:
        gaps[1:] = np.linalg.norm(np.diff(Z, axis=0), axis=1)
    r0 = cfg.min_window // 2

    window_len = np.empty(n, dtype=int)
    bounds = np.empty((n, 2), dtype=int)
    alpha = np.empty(n)
    weights = []
    for t in range(n):
        lo, hi, gamma = _window(gaps, t, t, t, r0, n, cfg)
        w = np.array([gamma[p] for p in range(lo, hi + 1)])
        a = 1.0 / w.sum()
        # centred on z_t so a constant window returns z_t exactly
        X[t] = Z[t] + a * (w @ (Z[lo:hi + 1] - Z[t]))
        window_len[t] = hi - lo + 1
        bounds[t] = (lo, hi)
        alpha[t] = a
        weights.append(w)
    return X, SmoothTrace(window_len, bounds, weights, alpha)


class AdaptiveWindowSmoother(TransformerMixin, BaseEstimator):
    """Stateless transformer wrapper around :func:`smooth`."""

    def __init__(self, min_window=2, max_window=64, sigma_mult=2.0):
        self.min_window = min_window
        self.max_window = max_window
        self.sigma_mult = sigma_mult

    def _config(self):
        return SmoothConfig(self.min_window, self.max_window, self.sigma_mult)

    def fit(self, X, y=None):
        self._config()
        self.n_features_in_ = np.atleast_2d(np.asarray(X).T).shape[0]
        return self

    def transform(self, X):
        out, self.trace_ = smooth(X, self._config())
        return out
