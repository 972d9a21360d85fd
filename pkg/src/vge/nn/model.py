"""Layer stacks: forward/backward composition, loss, masks and checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import EmptyBatch, ShapeMismatch
from . import layers as L
from .layers import DENSE, GRU, LSTM, SIMPLE_RNN, LayerSpec


@dataclass
class RnnModel:
    """Recurrent layers followed by a dense stack ending in ``Dense(1)``.

    Recurrent layers hand full hidden sequences to the next recurrent
    layer; the last one feeds its final state (projected through ``W_y``
    for a simple RNN) to the dense stack.  Hidden dense layers use tanh,
    the output layer is linear.  With no recurrent layers the dense stack
    reads the last timestep of the input window.
    """

    layers: list[LayerSpec]
    params: list[dict]
    input_dim: int
    mask_cell_state: bool = True
    scaled_masks: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        validate_layers(self.layers)
        if len(self.params) != len(self.layers):
            raise ShapeMismatch("one parameter dict per layer is required")
        n = self.input_dim
        for spec, p in zip(self.layers, self.params):
            for name, shape in L.param_shapes(spec, n).items():
                if name not in p or p[name].shape != shape:
                    got = None if name not in p else p[name].shape
                    raise ShapeMismatch(f"{spec.kind}.{name}: expected {shape}, got {got}")
            n = spec.units

    @property
    def n_recurrent(self) -> int:
        return sum(spec.recurrent for spec in self.layers)

    def copy(self) -> "RnnModel":
        return RnnModel(list(self.layers), [{k: v.copy() for k, v in p.items()}
                                            for p in self.params],
                        self.input_dim, self.mask_cell_state, self.scaled_masks,
                        dict(self.meta))

    def has_dropout(self) -> bool:
        return any(spec.dropout_p > 0 for spec in self.layers)


def validate_layers(layers):
    if not layers or layers[-1].kind != DENSE or layers[-1].units != 1:
        raise ValueError("the last layer must be Dense(1)")
    seen_dense = False
    for spec in layers:
        if spec.kind == DENSE:
            seen_dense = True
        elif seen_dense:
            raise ValueError("recurrent layers must precede dense layers")


def init_model(layers, input_dim: int, rng: np.random.Generator, **kwargs) -> RnnModel:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, forget bias +1."""
    layers = list(layers)
    validate_layers(layers)
    params = []
    n = input_dim
    for spec in layers:
        params.append(L.init_params(spec, n, rng))
        n = spec.units
    return RnnModel(layers, params, input_dim, **kwargs)


def _mask_dims(model: RnnModel):
    n = model.input_dim
    for spec in model.layers:
        keys = {"x": n}
        if spec.recurrent:
            keys["h"] = spec.units
            if spec.kind == LSTM:
                keys["c"] = spec.units
        yield spec, keys
        n = spec.units


def ones_masks(model: RnnModel, batch: int) -> list[dict]:
    return [{k: np.ones((batch, d)) for k, d in keys.items()}
            for _, keys in _mask_dims(model)]


def draw_masks(model: RnnModel, batch: int, rng: np.random.Generator,
               scaled: bool | None = None) -> list[dict]:
    """One Bernoulli keep-mask per sequence and layer, shared over time.

    With ``scaled`` (inverted dropout) kept entries are ``1/p_keep``.
    Layers with ``dropout_p == 0`` get all-ones masks and consume no
    random numbers.
    """
    scaled = model.scaled_masks if scaled is None else scaled
    masks = []
    for spec, keys in _mask_dims(model):
        keep = 1.0 - spec.dropout_p
        layer_masks = {}
        for k, d in keys.items():
            if spec.dropout_p == 0.0:
                layer_masks[k] = np.ones((batch, d))
                continue
            m = (rng.random((batch, d)) < keep).astype(float)
            layer_masks[k] = m / keep if scaled else m
        masks.append(layer_masks)
    return masks


def forward_model(model: RnnModel, x, masks=None, return_cache=False):
    """Scalar prediction per window; ``x`` is ``(B, T, N)`` or ``(T, N)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != model.input_dim:
        raise ShapeMismatch(f"expected (B, T, {model.input_dim}) input, got {x.shape}")
    B = x.shape[0]
    if masks is None:
        masks = ones_masks(model, B)
    caches = []
    seq = x
    feat = None
    n_rec = model.n_recurrent
    rec_seen = 0
    for spec, p, mask in zip(model.layers, model.params, masks):
        if spec.kind == SIMPLE_RNN:
            seq, cache = L.simple_rnn_forward(p, seq, mask=mask)
        elif spec.kind == LSTM:
            seq, cache = L.lstm_forward(p, seq, mask=mask,
                                        mask_cell_state=model.mask_cell_state)
        elif spec.kind == GRU:
            seq, cache = L.gru_forward(p, seq, mask=mask)
        if spec.recurrent:
            rec_seen += 1
            proj_cache = None
            if rec_seen == n_rec:
                feat = seq[:, -1]
                if spec.kind == SIMPLE_RNN:
                    feat, proj_cache = L.simple_rnn_project(p, feat, mask)
            caches.append((cache, proj_cache))
            continue
        if feat is None:
            feat = seq[:, -1]
        last = spec is model.layers[-1]
        feat, cache = L.dense_forward(p, feat, mask, "linear" if last else "tanh")
        caches.append(cache)
    y = feat[:, 0]
    if return_cache:
        return (y[0] if single else y), (caches, seq.shape)
    return y[0] if single else y


def backward_model(model: RnnModel, cache, dy) -> list[dict]:
    """Gradients of ``sum(dy * y)`` w.r.t. every parameter."""
    caches, seq_shape = cache
    grads: list = [None] * len(model.layers)
    d = np.asarray(dy, dtype=float).reshape(-1, 1)
    dseq = None
    B, T = seq_shape[0], seq_shape[1]
    for idx in range(len(model.layers) - 1, -1, -1):
        spec, p = model.layers[idx], model.params[idx]
        if spec.kind == DENSE:
            d, grads[idx] = L.dense_backward(p, caches[idx], d)
            continue
        cell_cache, proj_cache = caches[idx]
        if dseq is None:
            # last recurrent layer: gradient enters through the final state
            g = {k: np.zeros_like(v) for k, v in p.items()}
            if proj_cache is not None:
                d = L.simple_rnn_project_backward(p, proj_cache, d, g)
            dseq = np.zeros((B, T, spec.units))
            dseq[:, -1] = d
        else:
            g = None
        if spec.kind == SIMPLE_RNN:
            dseq, gc = L.simple_rnn_backward(p, cell_cache, dseq)
        elif spec.kind == LSTM:
            dseq, gc = L.lstm_backward(p, cell_cache, dseq)
        else:
            dseq, gc = L.gru_backward(p, cell_cache, dseq)
        if g is not None:
            for k in gc:
                gc[k] = gc[k] + g[k]
        grads[idx] = gc
    return grads


def weight_sq_sum(params) -> float:
    return float(sum(np.sum(v * v) for p in params for k, v in p.items() if L.is_weight(k)))


def loss(y_hat, y, params=(), weight_decay: float = 0.0) -> float:
    """Mean squared error plus ``weight_decay * sum(W**2)`` over weight matrices."""
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise EmptyBatch("loss of an empty batch")
    if y_hat.shape != y.shape:
        raise ShapeMismatch(f"prediction shape {y_hat.shape} != target shape {y.shape}")
    mse = float(np.mean((y_hat - y) ** 2))
    if weight_decay:
        mse += weight_decay * weight_sq_sum(params)
    return mse


def gradients(model: RnnModel, x, y, masks=None, weight_decay: float = 0.0):
    """Loss and exact BPTT gradients for one batch with fixed masks."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise EmptyBatch("gradients of an empty batch")
    y_hat, cache = forward_model(model, x, masks, return_cache=True)
    y_hat = np.atleast_1d(y_hat)
    value = loss(y_hat, y, model.params, weight_decay)
    grads = backward_model(model, cache, 2.0 * (y_hat - y) / y.size)
    if weight_decay:
        for p, g in zip(model.params, grads):
            for k in g:
                if L.is_weight(k):
                    g[k] = g[k] + 2.0 * weight_decay * p[k]
    return value, grads


def model_to_dict(model: RnnModel) -> dict:
    return {
        "format": "vge-rnn-model",
        "version": 1,
        "input_dim": model.input_dim,
        "mask_cell_state": model.mask_cell_state,
        "scaled_masks": model.scaled_masks,
        "layers": [spec.to_dict() for spec in model.layers],
        "params": [{k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                    for k, v in p.items()} for p in model.params],
        "meta": model.meta,
    }


def model_from_dict(d: dict) -> RnnModel:
    if d.get("format") != "vge-rnn-model":
        raise ValueError("not a vge model checkpoint")
    layers = [LayerSpec(**spec) for spec in d["layers"]]
    params = [{k: np.asarray(v["data"], dtype=float).reshape(v["shape"])
               for k, v in p.items()} for p in d["params"]]
    return RnnModel(layers, params, d["input_dim"], d["mask_cell_state"],
                    d["scaled_masks"], d.get("meta", {}))


def save_model(model: RnnModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> RnnModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
