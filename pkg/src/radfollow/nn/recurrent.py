"""GRU and LSTM cells, masked sequence runners and bidirectional encoders.

Cell weights use a fused layout. For a GRU with hidden size H the input
matrix ``Wx`` is ``(D, 3H)`` with gate blocks ordered update, reset,
candidate; ``Wh`` is ``(H, 3H)`` in the same order. LSTM blocks are ordered
input, forget, output, cell-candidate (``4H`` columns).

Sequences are padded to a common length and carry a ``(B, T)`` mask. A
masked step copies the previous state through unchanged, so the forward
direction's last column and the backward direction's first column hold
each sequence's final state regardless of its true length.
"""
from __future__ import annotations

import numpy as np

from .functional import sigmoid

GRU, LSTM = "gru", "lstm"


def _check(x, h, Wx, Wh):
    if x.shape[-1] != Wx.shape[0]:
        raise ValueError(f"input width {x.shape[-1]} != Wx rows {Wx.shape[0]}")
    if h.shape[-1] != Wh.shape[0]:
        raise ValueError(f"state width {h.shape[-1]} != Wh rows {Wh.shape[0]}")


def _gru_core(ax, h_prev, Wh, mask):
    H = h_prev.shape[-1]
    ah = h_prev @ Wh[:, : 2 * H]
    z = sigmoid(ax[:, :H] + ah[:, :H])
    r = sigmoid(ax[:, H : 2 * H] + ah[:, H:])
    rh = r * h_prev
    n = np.tanh(ax[:, 2 * H :] + rh @ Wh[:, 2 * H :])
    h = (1.0 - z) * h_prev + z * n
    if mask is not None:
        m = mask[:, None]
        h = m * h + (1.0 - m) * h_prev
    return h, (h_prev, z, r, rh, n, mask)


def _gru_core_backward(dh, cache, Wh, gWh):
    """Gradient w.r.t. the pre-activation input projection and the previous state."""
    h_prev, z, r, rh, n, mask = cache
    H = h_prev.shape[-1]
    if mask is not None:
        m = mask[:, None]
        dh_prev = (1.0 - m) * dh
        dh = m * dh
    else:
        dh_prev = np.zeros_like(dh)
    dz = dh * (n - h_prev)
    dh_prev += dh * (1.0 - z)
    dan = dh * z * (1.0 - n * n)
    gWh[:, 2 * H :] += rh.T @ dan
    drh = dan @ Wh[:, 2 * H :].T
    dh_prev += drh * r
    dr = drh * h_prev
    dazr = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)], axis=1)
    gWh[:, : 2 * H] += h_prev.T @ dazr
    dh_prev += dazr @ Wh[:, : 2 * H].T
    return np.concatenate([dazr, dan], axis=1), dh_prev


def gru_step(x, h_prev, Wx, Wh, b, mask=None):
    """One GRU step; returns ``(h, cache)``.

    h = (1 - z) * h_prev + z * tanh(x Wn + (r * h_prev) Un + bn)
    """
    _check(x, h_prev, Wx, Wh)
    h, core = _gru_core(x @ Wx + b, h_prev, Wh, mask)
    return h, (x, core)


def gru_step_backward(dh, cache, Wx, Wh, gWx, gWh, gb):
    x, core = cache
    dax, dh_prev = _gru_core_backward(dh, core, Wh, gWh)
    gWx += x.T @ dax
    gb += dax.sum(axis=0)
    return dax @ Wx.T, dh_prev


def _lstm_core(ax, h_prev, c_prev, Wh, mask):
    H = h_prev.shape[-1]
    a = ax + h_prev @ Wh
    i = sigmoid(a[:, :H])
    f = sigmoid(a[:, H : 2 * H])
    o = sigmoid(a[:, 2 * H : 3 * H])
    g = np.tanh(a[:, 3 * H :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    if mask is not None:
        m = mask[:, None]
        h = m * h + (1.0 - m) * h_prev
        c = m * c + (1.0 - m) * c_prev
    return h, c, (h_prev, c_prev, i, f, o, g, tc, mask)


def _lstm_core_backward(dh, dc, cache, Wh, gWh):
    h_prev, c_prev, i, f, o, g, tc, mask = cache
    if mask is not None:
        m = mask[:, None]
        dh_prev = (1.0 - m) * dh
        dc_prev = (1.0 - m) * dc
        dh = m * dh
        dc = m * dc
    else:
        dh_prev = np.zeros_like(dh)
        dc_prev = np.zeros_like(dc)
    do = dh * tc
    dct = dc + dh * o * (1.0 - tc * tc)
    di = dct * g
    dg = dct * i
    df = dct * c_prev
    dc_prev += dct * f
    da = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g * g)], axis=1
    )
    gWh += h_prev.T @ da
    dh_prev += da @ Wh.T
    return da, dh_prev, dc_prev


def lstm_step(x, h_prev, c_prev, Wx, Wh, b, mask=None):
    """One LSTM step; returns ``(h, c, cache)``."""
    _check(x, h_prev, Wx, Wh)
    h, c, core = _lstm_core(x @ Wx + b, h_prev, c_prev, Wh, mask)
    return h, c, (x, core)


def lstm_step_backward(dh, dc, cache, Wx, Wh, gWx, gWh, gb):
    x, core = cache
    da, dh_prev, dc_prev = _lstm_core_backward(dh, dc, core, Wh, gWh)
    gWx += x.T @ da
    gb += da.sum(axis=0)
    return da @ Wx.T, dh_prev, dc_prev


def run_rnn(kind, xs, mask, params, prefix, reverse=False):
    """Run a cell over ``xs`` of shape ``(B, T, D)``; returns ``(hs, cache)``.

    The input projection is computed for all steps at once.
    """
    Wx, Wh, b = params[prefix + "Wx"], params[prefix + "Wh"], params[prefix + "b"]
    B, T, _ = xs.shape
    H = Wh.shape[0]
    _check(xs, np.zeros((1, H)), Wx, Wh)
    AX = xs @ Wx + b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    caches = [None] * T
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        m = None if mask is None else mask[:, t]
        if kind == GRU:
            h, caches[t] = _gru_core(AX[:, t], h, Wh, m)
        else:
            h, c, caches[t] = _lstm_core(AX[:, t], h, c, Wh, m)
        hs[:, t] = h
    return hs, (kind, prefix, reverse, caches, xs)


def run_rnn_backward(dhs, cache, params, grads):
    kind, prefix, reverse, caches, xs = cache
    Wx, Wh = params[prefix + "Wx"], params[prefix + "Wh"]
    gWh = grads[prefix + "Wh"]
    B, T, D = xs.shape
    dAX = np.empty((B, T, Wx.shape[1]))
    dh = np.zeros((B, Wh.shape[0]))
    dc = np.zeros_like(dh)
    order = range(T) if reverse else range(T - 1, -1, -1)
    for t in order:
        dh = dh + dhs[:, t]
        if kind == GRU:
            dAX[:, t], dh = _gru_core_backward(dh, caches[t], Wh, gWh)
        else:
            dAX[:, t], dh, dc = _lstm_core_backward(dh, dc, caches[t], Wh, gWh)
    flat = dAX.reshape(-1, dAX.shape[-1])
    grads[prefix + "Wx"] += xs.reshape(-1, D).T @ flat
    grads[prefix + "b"] += flat.sum(axis=0)
    return dAX @ Wx.T


def bidi_encode(kind, xs, mask, params, prefix):
    """Bidirectional encoder: ``out[:, t] = concat(fwd_h_t, bwd_h_t)``.

    Forward weights live under ``prefix + "f."``, backward under ``prefix + "b."``.
    """
    if xs.shape[1] == 0:
        raise ValueError("cannot encode an empty sequence")
    hf, cf = run_rnn(kind, xs, mask, params, prefix + "f.")
    hb, cb = run_rnn(kind, xs, mask, params, prefix + "b.", reverse=True)
    return np.concatenate([hf, hb], axis=-1), (cf, cb, hf.shape[-1])


def bidi_encode_backward(dout, cache, params, grads):
    cf, cb, H = cache
    return run_rnn_backward(dout[..., :H], cf, params, grads) + run_rnn_backward(
        dout[..., H:], cb, params, grads
    )
