"""Spatial operations for the denoiser: conv2d (1x1/3x3), 2x average
pooling, nearest-neighbor upsampling, and the map<->token reshapes that
feed hidden states through attention one batch item at a time.

All graph tensors here are channels-last (B, H, W, C), which makes the
im2col matrices and the token reshapes contiguous without transposes.
Convolutions run as one GEMM per batch; the column matrix is cached for
the backward pass.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, _make


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(B,H,W,C) -> (B*H*W, k*k*C) with zero padding of (k-1)//2."""
    b, h, w, c = x.shape
    if k == 1:
        return x.reshape(b * h * w, c)
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    # (B,H,W,C,k,k) -> (B,H,W,k,k,C); the reshape makes the copy
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(b * h * w, k * k * c)


def _col2im(gcols: np.ndarray, shape: tuple, k: int) -> np.ndarray:
    """Scatter-add the im2col gradient back to (B,H,W,C)."""
    b, h, w, c = shape
    if k == 1:
        return gcols.reshape(b, h, w, c)
    pad = (k - 1) // 2
    g6 = gcols.reshape(b, h, w, k, k, c)
    gp = np.zeros((b, h + 2 * pad, w + 2 * pad, c), dtype=gcols.dtype)
    for i in range(k):
        for j in range(k):
            gp[:, i : i + h, j : j + w, :] += g6[:, :, :, i, j, :]
    return gp[:, pad : pad + h, pad : pad + w, :]


def conv2d(x: Tensor, w: Tensor, b: Tensor, kernel: int) -> Tensor:
    """Same-padded conv. ``w`` is (k*k*C_in, C_out), ``b`` is (C_out,)."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d needs (B,H,W,C) input, got shape {x.data.shape}")
    if kernel not in (1, 3):
        raise ShapeError(f"conv2d supports kernel 1 or 3, got {kernel}")
    bsz, h, wd, cin = x.data.shape
    if w.data.shape[0] != cin * kernel * kernel:
        raise ShapeError(
            f"conv2d weight rows {w.data.shape[0]} != k*k*C_in = {cin * kernel * kernel}"
        )
    cout = w.data.shape[1]
    cols = _im2col(x.data, kernel)
    out = (cols @ w.data + b.data).reshape(bsz, h, wd, cout)
    xshape = x.data.shape

    def bwd(g):
        gmat = g.reshape(-1, cout)
        gw = cols.T @ gmat
        gb = gmat.sum(axis=0)
        gx = _col2im(gmat @ w.data.T, xshape, kernel)
        return [(x, gx), (w, gw), (b, gb)]

    return _make(out, (x, w, b), bwd)


def avgpool2(x: Tensor) -> Tensor:
    b, h, w, c = x.data.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avgpool2 needs even spatial dims, got {h}x{w}")
    out = x.data.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def bwd(g):
        return [(x, np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25)]

    return _make(out, (x,), bwd)


def upsample2(x: Tensor) -> Tensor:
    b, h, w, c = x.data.shape
    out = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

    def bwd(g):
        return [(x, g.reshape(b, h, 2, w, 2, c).sum(axis=(2, 4)))]

    return _make(out, (x,), bwd)


def map_to_tokens(x: Tensor, item: int) -> Tensor:
    """Hidden map of one batch item -> (H*W, C) token matrix."""
    b, h, w, c = x.data.shape
    out = x.data[item].reshape(h * w, c).copy()
    xshape = x.data.shape

    def bwd(g):
        gx = np.zeros(xshape, dtype=g.dtype)
        gx[item] = g.reshape(h, w, c)
        return [(x, gx)]

    return _make(out, (x,), bwd)


def tokens_to_maps(parts, h: int, w: int) -> Tensor:
    """Stack per-item (H*W, C) token matrices back into (B, H, W, C)."""
    parts = list(parts)
    c = parts[0].data.shape[1]
    out = np.stack([p.data.reshape(h, w, c) for p in parts], axis=0)

    def bwd(g):
        return [(p, g[i].reshape(h * w, c)) for i, p in enumerate(parts)]

    return _make(out, tuple(parts), bwd)


def batch_scale_shift(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    """FiLM-style modulation: x * (1 + scale) + shift, with per-(B,C)
    coefficients broadcast over the spatial grid."""
    b, h, w, c = x.data.shape
    if scale.data.shape != (b, c) or shift.data.shape != (b, c):
        raise ShapeError(
            f"scale/shift must be (B,C)=({b},{c}), got {scale.data.shape} and {shift.data.shape}"
        )
    s4 = scale.data[:, None, None, :]
    out = x.data * (1.0 + s4) + shift.data[:, None, None, :]
    xd = x.data

    def bwd(g):
        return [
            (x, g * (1.0 + s4)),
            (scale, (g * xd).sum(axis=(1, 2))),
            (shift, g.sum(axis=(1, 2))),
        ]

    return _make(out, (x, scale, shift), bwd)
