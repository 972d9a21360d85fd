"""Adam optimizer and gradient clipping over lists of parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0


def adam_init(params) -> AdamState:
    return AdamState([{k: np.zeros_like(v) for k, v in p.items()} for p in params],
                     [{k: np.zeros_like(v) for k, v in p.items()} for p in params], 0)


def adam_step(params, grads, state: AdamState | None, cfg: AdamConfig = AdamConfig()):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    if state is None:
        state = adam_init(params)
    t = state.step + 1
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        np_, nm, nv = {}, {}, {}
        for k in p:
            nm[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k]
            nv[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k]
            m_hat = nm[k] / bc1
            v_hat = nv[k] / bc2
            np_[k] = p[k] - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        new_params.append(np_)
        new_m.append(nm)
        new_v.append(nv)
    return new_params, AdamState(new_m, new_v, t)


def global_norm(grads) -> float:
    return float(np.sqrt(sum(np.sum(g * g) for d in grads for g in d.values())))


def clip_by_global_norm(grads, max_norm: float):
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return [{k: g * scale for k, g in d.items()} for d in grads], norm
