"""LSTM cell and sequence unroll with backpropagation through time.

Gate blocks in the stacked weights are ordered (input, forget, cell, output).
"""
from __future__ import annotations

import dataclasses

import numpy as np


@dataclasses.dataclass
class LstmCellParams:
    input_weights: np.ndarray  # (4H, D)
    recurrent_weights: np.ndarray  # (4H, H)
    biases: np.ndarray  # (4H,)

    def __post_init__(self):
        H4, D = self.input_weights.shape
        if H4 % 4 or self.recurrent_weights.shape != (H4, H4 // 4) or self.biases.shape != (H4,):
            raise ValueError("inconsistent LSTM parameter shapes")

    @property
    def hidden_size(self) -> int:
        return self.input_weights.shape[0] // 4


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_cell(x, h_prev, c_prev, params: LstmCellParams):
    H = params.hidden_size
    if x.shape[-1] != params.input_weights.shape[1] or h_prev.shape[-1] != H:
        raise ValueError(f"lstm_cell: x {x.shape}, h {h_prev.shape}, hidden {H}")
    z = x @ params.input_weights.T + h_prev @ params.recurrent_weights.T + params.biases
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, g, o, tc)


def lstm_cell_grad(dh, dc, cache, params: LstmCellParams):
    """Returns dx, dh_prev, dc_prev and (dWx, dWh, db) for one step."""
    x, h_prev, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1 - tc ** 2)
    di, df, dg = dc * g, dc * c_prev, dc * i
    dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g ** 2), do * o * (1 - o)], axis=-1)
    dx = dz @ params.input_weights
    dh_prev = dz @ params.recurrent_weights
    return dx, dh_prev, dc * f, (dz.T @ x, dz.T @ h_prev, dz.sum(axis=0))


def lstm_sequence(xs: np.ndarray, params: LstmCellParams, h0=None, c0=None):
    """Unroll over xs (N, T, D); returns all hidden states (N, T, H) and a cache."""
    N, T, _ = xs.shape
    H = params.hidden_size
    h = np.zeros((N, H), dtype=xs.dtype) if h0 is None else h0
    c = np.zeros((N, H), dtype=xs.dtype) if c0 is None else c0
    hs = np.empty((N, T, H), dtype=xs.dtype)
    caches = []
    for t in range(T):
        h, c, cache = lstm_cell(xs[:, t], h, c, params)
        hs[:, t] = h
        caches.append(cache)
    return hs, caches


def lstm_sequence_grad(dhs: np.ndarray, caches, params: LstmCellParams):
    """BPTT given gradients w.r.t. every hidden output (zeros where unused)."""
    N, T, H = dhs.shape
    D = params.input_weights.shape[1]
    dxs = np.empty((N, T, D), dtype=dhs.dtype)
    dWx = np.zeros_like(params.input_weights)
    dWh = np.zeros_like(params.recurrent_weights)
    db = np.zeros_like(params.biases)
    dh_next = np.zeros((N, H), dtype=dhs.dtype)
    dc_next = np.zeros((N, H), dtype=dhs.dtype)
    for t in reversed(range(T)):
        dx, dh_next, dc_next, (gx, gh, gb) = lstm_cell_grad(dhs[:, t] + dh_next, dc_next, caches[t], params)
        dxs[:, t] = dx
        dWx += gx
        dWh += gh
        db += gb
    return dxs, (dWx, dWh, db)
