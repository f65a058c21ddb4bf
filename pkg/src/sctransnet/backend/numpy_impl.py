"""Vectorized numpy implementations of the hot kernels.

This module is the fallback used when the compiled extension is not
available.  Both backends expose the same functions with identical
semantics; `sctransnet.backend` picks one at import time.

Dense (groups == 1) convolutions are deliberately NOT part of the backend
surface: they reduce to BLAS matmuls and are implemented once in
`sctransnet.nn.functional`.  The backend owns the kernels where per-window
scalar work dominates and a compiled loop pays off: depthwise convolution,
2x2 max pooling, and the channel-axis 1-D convolution.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def depthwise_conv2d(x: np.ndarray, w: np.ndarray, stride: tuple[int, int],
                     padding: tuple[int, int]) -> np.ndarray:
    """Depthwise conv: x (b,c,h,w), w (c,1,kh,kw), one filter per channel."""
    b, c, h, wd = x.shape
    kh, kw = w.shape[2], w.shape[3]
    sy, sx = stride
    py, px = padding
    ho = (h + 2 * py - kh) // sy + 1
    wo = (wd + 2 * px - kw) // sx + 1
    xp = np.pad(x, ((0, 0), (0, 0), (py, py), (px, px)))
    out = np.zeros((b, c, ho, wo), dtype=x.dtype)
    coef = w[:, 0]  # (c, kh, kw)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, :, i:i + sy * (ho - 1) + 1:sy, j:j + sx * (wo - 1) + 1:sx]
            out += coef[None, :, i, j, None, None] * xs
    return out


def depthwise_conv2d_grad_input(gout: np.ndarray, w: np.ndarray,
                                in_shape: tuple[int, ...],
                                stride: tuple[int, int],
                                padding: tuple[int, int]) -> np.ndarray:
    b, c, h, wd = in_shape
    kh, kw = w.shape[2], w.shape[3]
    sy, sx = stride
    py, px = padding
    ho, wo = gout.shape[2], gout.shape[3]
    gxp = np.zeros((b, c, h + 2 * py, wd + 2 * px), dtype=gout.dtype)
    coef = w[:, 0]
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + sy * (ho - 1) + 1:sy, j:j + sx * (wo - 1) + 1:sx] += (
                coef[None, :, i, j, None, None] * gout)
    if py or px:
        return gxp[:, :, py:py + h, px:px + wd]
    return gxp


def depthwise_conv2d_grad_weight(gout: np.ndarray, x: np.ndarray,
                                 kernel: tuple[int, int],
                                 stride: tuple[int, int],
                                 padding: tuple[int, int]) -> np.ndarray:
    b, c, h, wd = x.shape
    kh, kw = kernel
    sy, sx = stride
    py, px = padding
    ho, wo = gout.shape[2], gout.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (py, py), (px, px)))
    gw = np.zeros((c, 1, kh, kw), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, :, i:i + sy * (ho - 1) + 1:sy, j:j + sx * (wo - 1) + 1:sx]
            gw[:, 0, i, j] = np.einsum("bchw,bchw->c", gout, xs)
    return gw


def maxpool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2/stride-2 max pool. Returns (out, flat argmax in {0,1,2,3})."""
    b, c, h, w = x.shape
    win = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(b, c, h // 2, w // 2, 4)
    idx = np.argmax(win, axis=-1).astype(np.int8)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return out, idx


def maxpool2x2_backward(gout: np.ndarray, idx: np.ndarray,
                        in_shape: tuple[int, ...]) -> np.ndarray:
    b, c, h, w = in_shape
    gwin = np.zeros((b, c, h // 2, w // 2, 4), dtype=gout.dtype)
    np.put_along_axis(gwin, idx[..., None].astype(np.intp), gout[..., None], axis=-1)
    gwin = gwin.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return gwin.reshape(b, c, h, w)


def conv1d_channel(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """1-D conv along the channel axis, zero padded. x (b,c), w (k,), k odd."""
    b, c = x.shape
    k = w.shape[0]
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (p, p)))
    out = np.zeros_like(x)
    for j in range(k):
        out += w[j] * xp[:, j:j + c]
    return out


def conv1d_channel_grad(gout: np.ndarray, x: np.ndarray,
                        w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b, c = x.shape
    k = w.shape[0]
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (p, p)))
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for j in range(k):
        gxp[:, j:j + c] += w[j] * gout
        gw[j] = np.sum(gout * xp[:, j:j + c])
    return gxp[:, p:p + c], gw
