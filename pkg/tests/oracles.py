"""Independent reference implementations used as test oracles.

Plain Python loops written from the textbook equations; nothing here
imports the package under test.
"""

import math
import struct


def sig(a):
    return 1.0 / (1.0 + math.exp(-a))


def matvec(W, v):
    return [sum(W[i][j] * v[j] for j in range(len(v))) for i in range(len(W))]


def _rows(a):
    return [list(map(float, r)) for r in a]


def rnn_ref(p, xs, mx=None, mh=None):
    W, b = _rows(p["W_h"]), list(p["b_h"])
    u = len(b)
    n = len(W[0]) - u
    mx = mx if mx is not None else [1.0] * n
    mh = mh if mh is not None else [1.0] * u
    h, out = [0.0] * u, []
    for x in xs:
        zeta = [x[j] * mx[j] for j in range(n)] + [h[k] * mh[k] for k in range(u)]
        a = matvec(W, zeta)
        h = [sig(a[k] + b[k]) for k in range(u)]
        out.append(h)
    return out


def lstm_ref(p, xs, mx=None, mh=None, mc=None):
    u = len(p["b_i"])
    n = len(p["W_i"][0]) - u
    mx = mx if mx is not None else [1.0] * n
    mh = mh if mh is not None else [1.0] * u
    mc = mc if mc is not None else [1.0] * u
    W = {g: _rows(p[f"W_{g}"]) for g in "ifoc"}
    b = {g: list(p[f"b_{g}"]) for g in "ifoc"}
    h, c, out = [0.0] * u, [0.0] * u, []
    for x in xs:
        zeta = [x[j] * mx[j] for j in range(n)] + [h[k] * mh[k] for k in range(u)]
        a = {g: matvec(W[g], zeta) for g in "ifoc"}
        i = [sig(a["i"][k] + b["i"][k]) for k in range(u)]
        f = [sig(a["f"][k] + b["f"][k]) for k in range(u)]
        o = [sig(a["o"][k] + b["o"][k]) for k in range(u)]
        g = [math.tanh(a["c"][k] + b["c"][k]) for k in range(u)]
        c = [f[k] * c[k] * mc[k] + i[k] * g[k] for k in range(u)]
        h = [o[k] * math.tanh(c[k]) for k in range(u)]
        out.append(h)
    return out


def gru_ref(p, xs, mx=None, mh=None):
    u = len(p["b_z"])
    n = len(p["W_z"][0]) - u
    mx = mx if mx is not None else [1.0] * n
    mh = mh if mh is not None else [1.0] * u
    Wz, Wr, Wh, Uh = (_rows(p[k]) for k in ("W_z", "W_r", "W_h", "U_h"))
    h, out = [0.0] * u, []
    for x in xs:
        zeta = [x[j] * mx[j] for j in range(n)] + [h[k] * mh[k] for k in range(u)]
        az, ar, ah = matvec(Wz, zeta), matvec(Wr, zeta), matvec(Wh, zeta)
        z = [sig(az[k] + p["b_z"][k]) for k in range(u)]
        r = [sig(ar[k] + p["b_r"][k]) for k in range(u)]
        rh = matvec(Uh, [r[k] * h[k] * mh[k] for k in range(u)])
        hh = [math.tanh(ah[k] + rh[k] + p["b_h"][k]) for k in range(u)]
        h = [z[k] * hh[k] * mh[k] + (1 - z[k]) * h[k] * mh[k] for k in range(u)]
        out.append(h)
    return out


def npy_bytes(rows, cols, values):
    """Hand-assembled NPY v1.0 file for a float64 matrix."""
    header = "{'descr': '<f8', 'fortran_order': False, 'shape': (%d, %d), }" % (rows, cols)
    total = 10 + len(header) + 1
    header += " " * ((64 - total % 64) % 64) + "\n"
    return (b"\x93NUMPY\x01\x00" + struct.pack("<H", len(header)) + header.encode("latin1")
            + struct.pack("<%dd" % len(values), *values))


def confusion_ref(pred_segments, true_segments, n):
    tp = fp = fn = tn = 0
    for t in range(n):
        p = any(s <= t <= e for s, e in pred_segments)
        a = any(s <= t <= e for s, e in true_segments)
        tp += p and a
        fp += p and not a
        fn += a and not p
        tn += not p and not a
    return tp, fp, fn, tn


def cov_two_pass(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    return sum((x - ma) * (y - mb) for x, y in zip(a, b)) / n
