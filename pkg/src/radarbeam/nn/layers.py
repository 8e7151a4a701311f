"""Feed-forward layers as forward/backward function pairs.

Forward functions return ``(out, cache)``; backward functions take the
upstream gradient and that cache.  Arrays are numpy ndarrays; images
use channels-major (C, N, H, W) layout.
"""
from __future__ import annotations

import numpy as np


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def dense(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    """y = W x + b for a batch of row vectors ``x`` (N, D); W is (out, D)."""
    _check(x.shape[-1] == W.shape[1] and b.shape == (W.shape[0],),
           f"dense: x {x.shape}, W {W.shape}, b {b.shape}")
    return x @ W.T + b, (x, W)


def dense_grad(dy: np.ndarray, cache):
    x, W = cache
    return dy @ W, dy.T @ x, dy.sum(axis=0)


def relu(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_grad(dy: np.ndarray, mask):
    return dy * mask


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    C, N, H, W = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((C, kh, kw, N, H, W), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            cols[:, u, v] = xp[:, :, u:u + H, v:v + W]
    return cols.reshape(C * kh * kw, N * H * W)


def conv2d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray | None = None):
    """Stride-1 cross-correlation with zero 'same' padding.

    Channels-major layout: x is (C, N, H, W) and the output (F, N, H, W),
    which keeps every im2col copy and GEMM contiguous.  kernels: (F, C, kh, kw)
    with odd kh, kw.
    """
    F, C, kh, kw = kernels.shape
    _check(kh % 2 == 1 and kw % 2 == 1, f"conv2d: kernel dims must be odd, got {kh}x{kw}")
    _check(x.ndim == 4 and x.shape[0] == C, f"conv2d: x {x.shape} vs kernels {kernels.shape}")
    _, N, H, W = x.shape
    cols = _im2col(x, kh, kw)
    y = kernels.reshape(F, -1) @ cols
    if bias is not None:
        y += bias[:, None]
    return y.reshape(F, N, H, W), (cols, x.shape, kernels, bias is not None)


def conv2d_grad(dy: np.ndarray, cache, need_input_grad: bool = True):
    """Returns (dx or None, dkernels, dbias or None)."""
    cols, x_shape, kernels, has_bias = cache
    F = kernels.shape[0]
    dy2 = dy.reshape(F, -1)
    dk = (dy2 @ cols.T).reshape(kernels.shape)
    db = dy2.sum(axis=1) if has_bias else None
    dx = None
    if need_input_grad:
        # correlate dy with the spatially flipped, channel-swapped kernels
        flipped = np.ascontiguousarray(kernels[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dx, _ = conv2d(dy, flipped)
    return dx, dk, db


def avgpool2(x: np.ndarray):
    """2x2 non-overlapping mean pool over the last two axes.

    An odd spatial dim is first padded on the right/bottom by repeating the
    last row/column.
    """
    H, W = x.shape[-2:]
    ph, pw = H % 2, W % 2
    if ph or pw:
        pad = [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)]
        x = np.pad(x, pad, mode="edge")
    y = (x[..., 0::2, 0::2] + x[..., 1::2, 0::2] + x[..., 0::2, 1::2] + x[..., 1::2, 1::2]) * 0.25
    return y, (H, W)


def avgpool2_grad(dy: np.ndarray, cache):
    H, W = cache
    dxp = np.repeat(np.repeat(dy, 2, axis=-2), 2, axis=-1) * 0.25
    dx = dxp[..., :H, :W].copy()
    if H % 2:
        dx[..., H - 1, :] += dxp[..., H, :W]
    if W % 2:
        dx[..., :, W - 1] += dxp[..., :H, W]
        if H % 2:
            dx[..., H - 1, W - 1] += dxp[..., H, W]
    return dx
