"""Mini-batch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import EmptyInput, TrainingDiverged
from .model import RnnModel, draw_masks, forward_model, gradients, ones_masks
from .optim import AdamConfig, adam_init, adam_step, clip_by_global_norm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    weight_decay: float = 1e-4
    adam: AdamConfig = field(default_factory=AdamConfig)
    clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.weight_decay < 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and weight_decay >= 0 required")


def train(model: RnnModel, data, cfg: TrainConfig = TrainConfig(), rng=None):
    """Train a copy of ``model`` on a :class:`~vge.dataset.WindowBatch`.

    Every sequence of every batch gets a fresh dropout-mask draw.  Returns
    ``(trained_model, history)`` where ``history[e]`` is the mean batch
    loss of epoch ``e``.

    Raises :class:`TrainingDiverged` when a batch loss is not finite.
    """
    n = len(data)
    if n == 0:
        raise EmptyInput("no training windows")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    model = model.copy()
    state = adam_init(model.params)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            x = np.ascontiguousarray(data.inputs[idx])
            y = data.targets[idx]
            masks = draw_masks(model, len(idx), rng)
            value, grads = gradients(model, x, y, masks, cfg.weight_decay)
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            grads, _ = clip_by_global_norm(grads, cfg.clip_norm)
            model.params, state = adam_step(model.params, grads, state, cfg.adam)
            total += value
            batches += 1
        history.append(total / batches)
        logger.debug("epoch %d loss %.6g", epoch, history[-1])
    return model, history


def predict(model: RnnModel, inputs, chunk_size: int = 4096) -> np.ndarray:
    """Deterministic (dropout-off) predictions, evaluated in window chunks."""
    n = inputs.shape[0]
    out = np.empty(n)
    for start in range(0, n, chunk_size):
        x = np.ascontiguousarray(inputs[start:start + chunk_size])
        out[start:start + x.shape[0]] = forward_model(model, x, ones_masks(model, x.shape[0]))
    return out


def mse(model: RnnModel, data, chunk_size: int = 4096) -> float:
    return float(np.mean((predict(model, data.inputs, chunk_size=chunk_size) - data.targets) ** 2))
