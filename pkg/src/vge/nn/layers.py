"""Dropout-masked recurrent and dense layers with hand-written BPTT.

All functions work on batches: sequences are ``(B, T, n)``.  Masks are
drawn once per sequence and reused at every timestep; ``mask["x"]`` has
shape ``(B, n)`` and ``mask["h"]`` / ``mask["c"]`` have shape ``(B, u)``.
The recurrent input is ``zeta_t = [x_t, h_{t-1}]`` and every gate sees
``zeta_t * [m_x, m_h]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

from ..exceptions import ShapeMismatch

SIMPLE_RNN = "SimpleRNN"
LSTM = "LSTM"
GRU = "GRU"
DENSE = "Dense"
RECURRENT_KINDS = (SIMPLE_RNN, LSTM, GRU)
KINDS = RECURRENT_KINDS + (DENSE,)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int
    dropout_p: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.units < 1:
            raise ValueError("units must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")

    @property
    def recurrent(self) -> bool:
        return self.kind in RECURRENT_KINDS

    def to_dict(self):
        return {"kind": self.kind, "units": self.units, "dropout_p": self.dropout_p}


def param_shapes(spec: LayerSpec, n_in: int) -> dict[str, tuple[int, ...]]:
    u = spec.units
    z = n_in + u
    if spec.kind == SIMPLE_RNN:
        return {"W_h": (u, z), "b_h": (u,), "W_y": (u, u), "b_y": (u,)}
    if spec.kind == LSTM:
        shapes = {f"W_{g}": (u, z) for g in "ifoc"}
        shapes.update({f"b_{g}": (u,) for g in "ifoc"})
        return shapes
    if spec.kind == GRU:
        return {"W_z": (u, z), "W_r": (u, z), "W_h": (u, z), "U_h": (u, u),
                "b_z": (u,), "b_r": (u,), "b_h": (u,)}
    return {"W": (u, n_in), "b": (u,)}


def is_weight(name: str) -> bool:
    """Weight matrices carry the decay penalty; biases do not."""
    return name[0] in "WU"


def init_params(spec: LayerSpec, n_in: int, rng: np.random.Generator) -> dict:
    params = {}
    for name, shape in param_shapes(spec, n_in).items():
        if is_weight(name):
            bound = 1.0 / np.sqrt(shape[1])
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
    if spec.kind == LSTM:
        params["b_f"][:] = 1.0
    return params


def _check(x, n_in, name):
    if x.ndim != 3 or x.shape[2] != n_in:
        raise ShapeMismatch(f"{name}: expected (B, T, {n_in}) input, got {x.shape}")


def _mask_or_ones(mask, key, shape):
    if mask is None or key not in mask:
        return np.ones(shape)
    m = mask[key]
    if m.shape != shape:
        raise ShapeMismatch(f"mask {key!r} has shape {m.shape}, expected {shape}")
    return m


# -- simple RNN ---------------------------------------------------------------

def simple_rnn_forward(p, x, h0=None, mask=None):
    """``h_t = sigmoid(W_h (zeta_t * m) + b_h)``; returns ``(H, cache)``."""
    u, z = p["W_h"].shape
    n_in = z - u
    _check(x, n_in, SIMPLE_RNN)
    B, T, _ = x.shape
    mx = _mask_or_ones(mask, "x", (B, n_in))
    mh = _mask_or_ones(mask, "h", (B, u))
    h = np.zeros((B, u)) if h0 is None else np.broadcast_to(h0, (B, u)).astype(float)
    H = np.empty((B, T, u))
    zetas = np.empty((B, T, z))
    h_prev = h
    for t in range(T):
        zeta = np.concatenate([x[:, t] * mx, h_prev * mh], axis=1)
        h_prev = sigmoid(zeta @ p["W_h"].T + p["b_h"])
        zetas[:, t] = zeta
        H[:, t] = h_prev
    return H, (zetas, H, mx, mh)


def simple_rnn_backward(p, cache, dH):
    zetas, H, mx, mh = cache
    B, T, u = H.shape
    n_in = zetas.shape[2] - u
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dx = np.empty((B, T, n_in))
    dh_next = np.zeros((B, u))
    for t in range(T - 1, -1, -1):
        h = H[:, t]
        da = (dH[:, t] + dh_next) * h * (1.0 - h)
        grads["W_h"] += da.T @ zetas[:, t]
        grads["b_h"] += da.sum(axis=0)
        dzeta = da @ p["W_h"]
        dx[:, t] = dzeta[:, :n_in] * mx
        dh_next = dzeta[:, n_in:] * mh
    return dx, grads


def simple_rnn_project(p, h_last, mask=None):
    """Output map ``y = W_y (h * m_h) + b_y`` of the last recurrent layer."""
    B, u = h_last.shape
    mh = _mask_or_ones(mask, "h", (B, u))
    hm = h_last * mh
    return hm @ p["W_y"].T + p["b_y"], (hm, mh)


def simple_rnn_project_backward(p, cache, dy, grads):
    hm, mh = cache
    grads["W_y"] += dy.T @ hm
    grads["b_y"] += dy.sum(axis=0)
    return (dy @ p["W_y"]) * mh


# -- LSTM ---------------------------------------------------------------------

def lstm_forward(p, x, h0=None, c0=None, mask=None, mask_cell_state=True):
    """Masked LSTM; the carried cell state is multiplied by ``mask["c"]``."""
    u, z = p["W_i"].shape
    n_in = z - u
    _check(x, n_in, LSTM)
    B, T, _ = x.shape
    mx = _mask_or_ones(mask, "x", (B, n_in))
    mh = _mask_or_ones(mask, "h", (B, u))
    mc = _mask_or_ones(mask, "c", (B, u)) if mask_cell_state else np.ones((B, u))
    h = np.zeros((B, u)) if h0 is None else np.broadcast_to(h0, (B, u)).astype(float)
    c = np.zeros((B, u)) if c0 is None else np.broadcast_to(c0, (B, u)).astype(float)
    H = np.empty((B, T, u))
    cache = {k: np.empty((B, T, u)) for k in ("i", "f", "o", "g", "c", "c_prev")}
    cache["zeta"] = np.empty((B, T, z))
    for t in range(T):
        zeta = np.concatenate([x[:, t] * mx, h * mh], axis=1)
        i = sigmoid(zeta @ p["W_i"].T + p["b_i"])
        f = sigmoid(zeta @ p["W_f"].T + p["b_f"])
        o = sigmoid(zeta @ p["W_o"].T + p["b_o"])
        g = np.tanh(zeta @ p["W_c"].T + p["b_c"])
        cache["c_prev"][:, t] = c
        c = f * c * mc + i * g
        h = o * np.tanh(c)
        for k, v in (("i", i), ("f", f), ("o", o), ("g", g), ("c", c)):
            cache[k][:, t] = v
        cache["zeta"][:, t] = zeta
        H[:, t] = h
    cache.update(mx=mx, mh=mh, mc=mc)
    return H, cache


def lstm_backward(p, cache, dH):
    B, T, u = dH.shape
    n_in = cache["zeta"].shape[2] - u
    mx, mh, mc = cache["mx"], cache["mh"], cache["mc"]
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dx = np.empty((B, T, n_in))
    dh_next = np.zeros((B, u))
    dc_next = np.zeros((B, u))
    for t in range(T - 1, -1, -1):
        i, f, o, g = (cache[k][:, t] for k in "ifog")
        c, c_prev, zeta = cache["c"][:, t], cache["c_prev"][:, t], cache["zeta"][:, t]
        dh = dH[:, t] + dh_next
        tc = np.tanh(c)
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da = {
            "i": dc * g * i * (1.0 - i),
            "f": dc * c_prev * mc * f * (1.0 - f),
            "o": dh * tc * o * (1.0 - o),
            "c": dc * i * (1.0 - g * g),
        }
        dzeta = np.zeros_like(zeta)
        for gate, d in da.items():
            grads[f"W_{gate}"] += d.T @ zeta
            grads[f"b_{gate}"] += d.sum(axis=0)
            dzeta += d @ p[f"W_{gate}"]
        dc_next = dc * f * mc
        dx[:, t] = dzeta[:, :n_in] * mx
        dh_next = dzeta[:, n_in:] * mh
    return dx, grads


# -- GRU ----------------------------------------------------------------------

def gru_forward(p, x, h0=None, mask=None):
    """Masked GRU with the mask placement::

        h_hat = tanh(W_h (zeta*m) + U_h (r * h_prev * m_h) + b_h)
        h     = z * h_hat * m_h + (1 - z) * h_prev * m_h
    """
    u, z_dim = p["W_z"].shape
    n_in = z_dim - u
    _check(x, n_in, GRU)
    B, T, _ = x.shape
    mx = _mask_or_ones(mask, "x", (B, n_in))
    mh = _mask_or_ones(mask, "h", (B, u))
    h = np.zeros((B, u)) if h0 is None else np.broadcast_to(h0, (B, u)).astype(float)
    H = np.empty((B, T, u))
    cache = {k: np.empty((B, T, u)) for k in ("z", "r", "hh", "h_prev")}
    cache["zeta"] = np.empty((B, T, z_dim))
    for t in range(T):
        zeta = np.concatenate([x[:, t] * mx, h * mh], axis=1)
        zg = sigmoid(zeta @ p["W_z"].T + p["b_z"])
        r = sigmoid(zeta @ p["W_r"].T + p["b_r"])
        hh = np.tanh(zeta @ p["W_h"].T + (r * h * mh) @ p["U_h"].T + p["b_h"])
        cache["h_prev"][:, t] = h
        h = (zg * hh + (1.0 - zg) * h) * mh
        for k, v in (("z", zg), ("r", r), ("hh", hh)):
            cache[k][:, t] = v
        cache["zeta"][:, t] = zeta
        H[:, t] = h
    cache.update(mx=mx, mh=mh)
    return H, cache


def gru_backward(p, cache, dH):
    B, T, u = dH.shape
    n_in = cache["zeta"].shape[2] - u
    mx, mh = cache["mx"], cache["mh"]
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dx = np.empty((B, T, n_in))
    dh_next = np.zeros((B, u))
    for t in range(T - 1, -1, -1):
        zg, r, hh = cache["z"][:, t], cache["r"][:, t], cache["hh"][:, t]
        h_prev, zeta = cache["h_prev"][:, t], cache["zeta"][:, t]
        ds = (dH[:, t] + dh_next) * mh
        dz = ds * (hh - h_prev)
        da_h = ds * zg * (1.0 - hh * hh)
        dh_prev = ds * (1.0 - zg)
        q = r * h_prev * mh
        grads["W_h"] += da_h.T @ zeta
        grads["U_h"] += da_h.T @ q
        grads["b_h"] += da_h.sum(axis=0)
        dq = da_h @ p["U_h"]
        dr = dq * h_prev * mh
        dh_prev += dq * r * mh
        da_z = dz * zg * (1.0 - zg)
        da_r = dr * r * (1.0 - r)
        grads["W_z"] += da_z.T @ zeta
        grads["b_z"] += da_z.sum(axis=0)
        grads["W_r"] += da_r.T @ zeta
        grads["b_r"] += da_r.sum(axis=0)
        dzeta = da_h @ p["W_h"] + da_z @ p["W_z"] + da_r @ p["W_r"]
        dx[:, t] = dzeta[:, :n_in] * mx
        dh_next = dh_prev + dzeta[:, n_in:] * mh
    return dx, grads


# -- dense --------------------------------------------------------------------

def dense_forward(p, x, mask=None, activation="tanh"):
    """``y = act(W (x * m) + b)`` with ``m`` dropping input units."""
    u, n_in = p["W"].shape
    if x.ndim != 2 or x.shape[1] != n_in:
        raise ShapeMismatch(f"Dense: expected (B, {n_in}) input, got {x.shape}")
    mx = _mask_or_ones(mask, "x", x.shape)
    xm = x * mx
    a = xm @ p["W"].T + p["b"]
    y = np.tanh(a) if activation == "tanh" else a
    return y, (xm, mx, y, activation)


def dense_backward(p, cache, dy):
    xm, mx, y, activation = cache
    da = dy * (1.0 - y * y) if activation == "tanh" else dy
    grads = {"W": da.T @ xm, "b": da.sum(axis=0)}
    return (da @ p["W"]) * mx, grads


def _as_batch(x_seq, masks=None):
    x = np.asarray(x_seq, dtype=float)
    if x.ndim != 2:
        return x, masks, False
    if masks is not None:
        masks = {k: np.asarray(v, dtype=float).reshape(1, -1) for k, v in masks.items()}
    return x[None], masks, True


def forward_simple_rnn(p, x_seq, h0=None, masks=None):
    """Hidden sequence of a simple RNN for ``(T, n)`` or ``(B, T, n)`` input."""
    x, masks, single = _as_batch(x_seq, masks)
    H, _ = simple_rnn_forward(p, x, h0, masks)
    return H[0] if single else H


def forward_lstm(p, x_seq, h0=None, c0=None, masks=None, mask_cell_state=True):
    x, masks, single = _as_batch(x_seq, masks)
    H, _ = lstm_forward(p, x, h0, c0, masks, mask_cell_state)
    return H[0] if single else H


def forward_gru(p, x_seq, h0=None, masks=None):
    x, masks, single = _as_batch(x_seq, masks)
    H, _ = gru_forward(p, x, h0, masks)
    return H[0] if single else H


def forward_dense(p, x, mask=None, activation="linear"):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None]
        if mask is not None:
            mask = {"x": np.asarray(mask, float)[None]}
    elif mask is not None and not isinstance(mask, dict):
        mask = {"x": np.asarray(mask, float)}
    y, _ = dense_forward(p, x, mask, activation)
    return y[0] if single else y
