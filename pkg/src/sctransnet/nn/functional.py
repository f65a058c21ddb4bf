"""Differentiable operations over ``Tensor``.

Every op computes its forward value with numpy (or a backend kernel) and
registers a closure implementing the exact vector-Jacobian product.  All
analytic gradients here are covered by finite-difference tests.

Convolution routing:

* depthwise (groups == in == out channels)  -> backend kernel
* kernel == stride, no padding, groups == 1 -> single-GEMM patchify path
* anything else                             -> shift-and-matmul over taps

The shift-and-matmul form does one BLAS matmul per kernel tap, which keeps
memory bounded (no full im2col buffer) while staying vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import backend
from ..errors import ConfigurationError
from .tensor import Tensor, as_tensor, make_op

# ---------------------------------------------------------------------------
# elementwise / shape ops
# ---------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        data = a.data + a.data.dtype.type(b)

        def bwd_s(g):
            a._accumulate(g)

        return make_op(data, (a,), bwd_s)

    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return make_op(data, (a, b), bwd)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        c = a.data.dtype.type(b)
        data = a.data * c

        def bwd_s(g):
            a._accumulate(g * c)

        return make_op(data, (a,), bwd_s)

    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return make_op(data, (a, b), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    old = x.data.shape
    data = x.data.reshape(shape)

    def bwd(g):
        x._accumulate(g.reshape(old))

    return make_op(data, (x,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t._accumulate(g[tuple(sl)])

    return make_op(data, tuple(tensors), bwd)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    data = x.data[sl].copy()

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[sl] = g
        x._accumulate(gx)

    return make_op(data, (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def bwd(g):
        x._accumulate(np.broadcast_to(g, x.data.shape))

    return make_op(data, (x,), bwd)


def mean_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    data = np.asarray(x.data.mean(), dtype=x.data.dtype)

    def bwd(g):
        x._accumulate(np.broadcast_to(g / n, x.data.shape).astype(x.data.dtype))

    return make_op(data, (x,), bwd)


def matmul(a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    """Batched matrix product; leading dims of a and b must match."""
    a, b = as_tensor(a), as_tensor(b)
    bd = np.swapaxes(b.data, -1, -2) if transpose_b else b.data
    data = np.matmul(a.data, bd)

    def bwd(g):
        ga = np.matmul(g, bd.swapaxes(-1, -2))
        if a.data.ndim < ga.ndim:
            ga = ga.sum(axis=tuple(range(ga.ndim - a.data.ndim)))
        if transpose_b:
            gb = np.matmul(g.swapaxes(-1, -2), a.data)
        else:
            gb = np.matmul(a.data.swapaxes(-1, -2), g)
        if b.data.ndim < gb.ndim:
            gb = gb.sum(axis=tuple(range(gb.ndim - b.data.ndim)))
        a._accumulate(ga)
        b._accumulate(gb)

    return make_op(data, (a, b), bwd)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    data = np.maximum(x.data, 0)

    def bwd(g):
        x._accumulate(g * (x.data > 0))

    return make_op(data, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    data = _sigmoid_raw(x.data)

    def bwd(g):
        x._accumulate(g * data * (1 - data))

    return make_op(data, (x,), bwd)


def _sigmoid_raw(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    # hold saturated values strictly inside (0, 1)
    fi = np.finfo(v.dtype)
    return np.clip(out, fi.tiny, 1.0 - fi.epsneg)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5*x*(1 + tanh(c*(x + a*x^3)))."""
    x = as_tensor(x)
    v = x.data
    inner = _GELU_C * (v + _GELU_A * v ** 3)
    t = np.tanh(inner)
    data = 0.5 * v * (1.0 + t)

    def bwd(g):
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * v ** 2)
        x._accumulate(g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t ** 2) * dinner))

    return make_op(data, (x,), bwd)


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "gelu":
        return gelu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ConfigurationError(f"unknown activation kind {kind!r}")


def softmax_lastdim(x: Tensor) -> Tensor:
    """Row softmax over the last axis, computed with max subtraction."""
    x = as_tensor(x)
    m = x.data.max(axis=-1, keepdims=True)
    e = np.exp(x.data - m)
    data = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * data).sum(axis=-1, keepdims=True)
        x._accumulate((g - dot) * data)

    return make_op(data, (x,), bwd)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    groups: int = 1
    has_bias: bool = True

    def __post_init__(self):
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigurationError(
                f"channels ({self.in_channels}->{self.out_channels}) not divisible "
                f"by groups={self.groups}")
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.padding) < 0:
            raise ConfigurationError(f"invalid conv geometry {self}")

    @property
    def is_depthwise(self) -> bool:
        return self.groups == self.in_channels == self.out_channels

    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, *self.kernel)

    def out_extents(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        ho = (h + 2 * self.padding[0] - kh) // self.stride[0] + 1
        wo = (w + 2 * self.padding[1] - kw) // self.stride[1] + 1
        if ho < 1 or wo < 1:
            raise ConfigurationError(
                f"conv produces empty spatial output for input {h}x{w} with {self}")
        return ho, wo


def _tap_slices(i, j, stride, ho, wo):
    sy, sx = stride
    return (slice(i, i + sy * (ho - 1) + 1, sy), slice(j, j + sx * (wo - 1) + 1, sx))


def _conv_fwd(x, w, spec: ConvSpec):
    b, cin, h, wd = x.shape
    kh, kw = spec.kernel
    ho, wo = spec.out_extents(h, wd)
    cout = spec.out_channels
    if spec.is_depthwise:
        return backend.kernels.depthwise_conv2d(x, w, spec.stride, spec.padding)
    if spec.groups == 1 and spec.kernel == spec.stride and spec.padding == (0, 0):
        xv = x.reshape(b, cin, ho, kh, wo, kw).transpose(0, 2, 4, 1, 3, 5)
        xv = xv.reshape(b, ho * wo, cin * kh * kw)
        out = np.matmul(xv, w.reshape(cout, -1).T)
        return out.transpose(0, 2, 1).reshape(b, cout, ho, wo)
    xp = np.pad(x, ((0, 0), (0, 0), (spec.padding[0],) * 2, (spec.padding[1],) * 2))
    if spec.groups == 1:
        # tap-major contiguous weights keep the per-tap matmul on the BLAS path
        wt = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
        out = np.zeros((b, cout, ho * wo), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                sy, sx = _tap_slices(i, j, spec.stride, ho, wo)
                xs = np.ascontiguousarray(xp[:, :, sy, sx]).reshape(b, cin, ho * wo)
                out += np.matmul(wt[i, j], xs)
        return out.reshape(b, cout, ho, wo)
    g = spec.groups
    xg = xp.reshape(b, g, cin // g, xp.shape[2], xp.shape[3])
    wg = w.reshape(g, cout // g, cin // g, kh, kw)
    out = np.zeros((b, g, cout // g, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            sy, sx = _tap_slices(i, j, spec.stride, ho, wo)
            out += np.einsum("goi,bgihw->bgohw", wg[:, :, :, i, j],
                             xg[:, :, :, sy, sx], optimize=True)
    return out.reshape(b, cout, ho, wo)


def _conv_grad_input(gout, w, in_shape, spec: ConvSpec):
    b, cin, h, wd = in_shape
    kh, kw = spec.kernel
    ho, wo = gout.shape[2], gout.shape[3]
    if spec.is_depthwise:
        return backend.kernels.depthwise_conv2d_grad_input(
            gout, w, in_shape, spec.stride, spec.padding)
    cout = spec.out_channels
    if spec.groups == 1 and spec.kernel == spec.stride and spec.padding == (0, 0):
        g2 = gout.reshape(b, cout, ho * wo).transpose(0, 2, 1)
        gxv = np.matmul(g2, w.reshape(cout, -1))
        gxv = gxv.reshape(b, ho, wo, cin, kh, kw).transpose(0, 3, 1, 4, 2, 5)
        return gxv.reshape(b, cin, h, wd)
    py, px = spec.padding
    gxp = np.zeros((b, cin, h + 2 * py, wd + 2 * px), dtype=gout.dtype)
    if spec.groups == 1:
        wt = np.ascontiguousarray(w.transpose(2, 3, 1, 0))  # (kh, kw, cin, cout)
        g2 = gout.reshape(b, cout, ho * wo)
        for i in range(kh):
            for j in range(kw):
                sy, sx = _tap_slices(i, j, spec.stride, ho, wo)
                gxp[:, :, sy, sx] += np.matmul(wt[i, j], g2).reshape(
                    b, cin, ho, wo)
    else:
        g = spec.groups
        gg = gout.reshape(b, g, cout // g, ho, wo)
        wg = w.reshape(g, cout // g, cin // g, kh, kw)
        gxpg = gxp.reshape(b, g, cin // g, gxp.shape[2], gxp.shape[3])
        for i in range(kh):
            for j in range(kw):
                sy, sx = _tap_slices(i, j, spec.stride, ho, wo)
                gxpg[:, :, :, sy, sx] += np.einsum(
                    "goi,bgohw->bgihw", wg[:, :, :, i, j], gg, optimize=True)
    if py or px:
        return gxp[:, :, py:py + h, px:px + wd]
    return gxp


def _conv_grad_weight(gout, x, spec: ConvSpec):
    b, cin, h, wd = x.shape
    kh, kw = spec.kernel
    ho, wo = gout.shape[2], gout.shape[3]
    cout = spec.out_channels
    if spec.is_depthwise:
        return backend.kernels.depthwise_conv2d_grad_weight(
            gout, x, spec.kernel, spec.stride, spec.padding)
    if spec.groups == 1 and spec.kernel == spec.stride and spec.padding == (0, 0):
        xv = x.reshape(b, cin, ho, kh, wo, kw).transpose(0, 2, 4, 1, 3, 5)
        xv = xv.reshape(b, ho * wo, cin * kh * kw)
        g2 = gout.reshape(b, cout, ho * wo)
        return np.matmul(g2, xv).sum(axis=0).reshape(spec.weight_shape())
    xp = np.pad(x, ((0, 0), (0, 0), (spec.padding[0],) * 2, (spec.padding[1],) * 2))
    gw = np.zeros(spec.weight_shape(), dtype=x.dtype)
    if spec.groups == 1:
        g2 = gout.reshape(b, cout, ho * wo)
        for i in range(kh):
            for j in range(kw):
                sy, sx = _tap_slices(i, j, spec.stride, ho, wo)
                xs = np.ascontiguousarray(xp[:, :, sy, sx]).reshape(b, cin, ho * wo)
                gw[:, :, i, j] = np.matmul(g2, xs.transpose(0, 2, 1)).sum(axis=0)
    else:
        g = spec.groups
        gg = gout.reshape(b, g, cout // g, ho, wo)
        xg = xp.reshape(b, g, cin // g, xp.shape[2], xp.shape[3])
        gwg = gw.reshape(g, cout // g, cin // g, kh, kw)
        for i in range(kh):
            for j in range(kw):
                sy, sx = _tap_slices(i, j, spec.stride, ho, wo)
                gwg[:, :, :, i, j] = np.einsum(
                    "bgohw,bgihw->goi", gg, xg[:, :, :, sy, sx], optimize=True)
    return gw


def conv2d(x: Tensor, spec: ConvSpec, weight: Tensor,
           bias: Optional[Tensor] = None) -> Tensor:
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 4:
        raise ConfigurationError(f"conv2d expects (b,c,h,w), got {x.data.shape}")
    if x.data.shape[1] != spec.in_channels:
        raise ConfigurationError(
            f"input has {x.data.shape[1]} channels, spec expects {spec.in_channels}")
    if weight.data.shape != spec.weight_shape():
        raise ConfigurationError(
            f"weight shape {weight.data.shape} != {spec.weight_shape()}")
    data = _conv_fwd(x.data, weight.data, spec)
    if bias is not None:
        data = data + bias.data[None, :, None, None]
    in_shape = x.data.shape
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        x._accumulate(_conv_grad_input(g, weight.data, in_shape, spec))
        weight._accumulate(_conv_grad_weight(g, x.data, spec))
        if bias is not None:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    return make_op(data, parents, bwd)


def conv1d_channel(x: Tensor, weight: Tensor) -> Tensor:
    """k-tap 1-D conv along the channel axis of a (b,c,1,1) map, zero padded."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 4 or x.data.shape[2] != 1 or x.data.shape[3] != 1:
        raise ConfigurationError(
            f"conv1d_channel expects (b,c,1,1), got {x.data.shape}")
    k = weight.data.shape[0]
    if k % 2 == 0:
        raise ConfigurationError(f"conv1d_channel kernel size must be odd, got {k}")
    x2 = x.data[:, :, 0, 0]
    data = backend.kernels.conv1d_channel(x2, weight.data)[:, :, None, None]

    def bwd(g):
        gx, gw = backend.kernels.conv1d_channel_grad(g[:, :, 0, 0], x2, weight.data)
        x._accumulate(gx[:, :, None, None])
        weight._accumulate(gw)

    return make_op(data, (x, weight), bwd)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight, transpose_b=True)
    if bias is not None:
        out = add(out, bias)
    return out


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def norm_axes(x: Tensor, axes: tuple[int, ...], eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance over ``axes`` (population variance), no affine."""
    x = as_tensor(x)
    n = 1
    for ax in axes:
        n *= x.data.shape[ax]
    if n == 0:
        raise ConfigurationError(f"zero-size normalization axes {axes} for "
                                 f"shape {x.data.shape}")
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=axes, keepdims=True)
    ivstd = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    data = xc * ivstd

    def bwd(g):
        gm = g.mean(axis=axes, keepdims=True)
        gxm = (g * xc).mean(axis=axes, keepdims=True)
        x._accumulate(ivstd * (g - gm - xc * (ivstd * ivstd) * gxm))

    return make_op(data, (x,), bwd)


def _affine_channel(x: Tensor, gamma: Optional[Tensor],
                    beta: Optional[Tensor]) -> Tensor:
    if gamma is None:
        return x
    c = gamma.data.shape[0]
    shape = (1, c) + (1,) * (x.data.ndim - 2)
    out = mul(x, reshape(gamma, shape))
    if beta is not None:
        out = add(out, reshape(beta, shape))
    return out


def normalize(x: Tensor, kind: str, gamma: Optional[Tensor] = None,
              beta: Optional[Tensor] = None, eps: float = 1e-5,
              training: bool = True,
              running_mean: Optional[np.ndarray] = None,
              running_var: Optional[np.ndarray] = None,
              momentum: float = 0.1) -> Tensor:
    """Normalize a feature map.

    * ``layer``: over channels, separately per (batch, spatial position);
    * ``instance``: over spatial positions, separately per (batch, channel);
    * ``batch``: over (batch, spatial) per channel; training mode uses batch
      statistics and updates the running buffers in place, eval mode
      normalizes with the running statistics.
    """
    x = as_tensor(x)
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    if kind == "layer":
        return _affine_channel(norm_axes(x, (1,), eps), gamma, beta)
    if kind == "instance":
        axes = tuple(range(2, x.data.ndim))
        return _affine_channel(norm_axes(x, axes, eps), gamma, beta)
    if kind != "batch":
        raise ConfigurationError(f"unknown normalization kind {kind!r}")

    if training:
        out = norm_axes(x, (0, 2, 3), eps)
        if running_mean is not None:
            bm = x.data.mean(axis=(0, 2, 3))
            bv = x.data.var(axis=(0, 2, 3))
            running_mean *= (1.0 - momentum)
            running_mean += momentum * bm.astype(running_mean.dtype)
            running_var *= (1.0 - momentum)
            running_var += momentum * bv.astype(running_var.dtype)
        return _affine_channel(out, gamma, beta)

    if running_mean is None or running_var is None:
        raise ConfigurationError("batch norm eval mode needs running statistics")
    ivstd = (1.0 / np.sqrt(running_var + eps)).astype(x.data.dtype)
    rm = running_mean.astype(x.data.dtype)
    data = (x.data - rm[None, :, None, None]) * ivstd[None, :, None, None]

    def bwd(g):
        x._accumulate(g * ivstd[None, :, None, None])

    return _affine_channel(make_op(data, (x,), bwd), gamma, beta)


# ---------------------------------------------------------------------------
# resampling and pooling
# ---------------------------------------------------------------------------


def _resample_coords(n_in: int, n_out: int):
    """align_corners=False source coordinates, clamped to the valid range."""
    s = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    s = np.clip(s, 0.0, n_in - 1)
    i0 = np.floor(s).astype(np.intp)
    f = s - i0
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, f


def _resample_matrix(n_in, n_out, dtype):
    i0, i1, f = _resample_coords(n_in, n_out)
    m = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - f)
    np.add.at(m, (rows, i1), f)
    return m.astype(dtype)


def resample_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize (align_corners=False); exact for constant inputs."""
    x = as_tensor(x)
    if out_h < 1 or out_w < 1:
        raise ConfigurationError("output extents must be >= 1")
    b, c, h, w = x.data.shape
    if (out_h, out_w) == (h, w):
        data = x.data.copy()

        def bwd_id(g):
            x._accumulate(g)

        return make_op(data, (x,), bwd_id)

    iy0, iy1, fy = _resample_coords(h, out_h)
    ix0, ix1, fx = _resample_coords(w, out_w)
    fyc = fy.astype(x.data.dtype)[:, None]
    fxc = fx.astype(x.data.dtype)
    # lerp form a + f*(b-a): bitwise-exact on constant inputs
    a = x.data[:, :, iy0, :]
    bb = x.data[:, :, iy1, :]
    tmp = a + fyc * (bb - a)
    cc = tmp[:, :, :, ix0]
    dd = tmp[:, :, :, ix1]
    data = cc + fxc * (dd - cc)
    in_shape = x.data.shape

    def bwd(g):
        wy = _resample_matrix(h, out_h, g.dtype)
        wx = _resample_matrix(w, out_w, g.dtype)
        x._accumulate(np.einsum("bcop,oh,pw->bchw", g, wy, wx, optimize=True))

    return make_op(data, (x,), bwd)


def maxpool2x2(x: Tensor) -> Tensor:
    x = as_tensor(x)
    b, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ConfigurationError(
            f"max2x2 pooling requires even spatial extents, got {h}x{w} "
            "(upstream padding policy violated)")
    data, idx = backend.kernels.maxpool2x2(x.data)
    in_shape = x.data.shape

    def bwd(g):
        x._accumulate(backend.kernels.maxpool2x2_backward(g, idx, in_shape))

    return make_op(data, (x,), bwd)


def gap(x: Tensor) -> Tensor:
    """Global average pool to (b, c, 1, 1)."""
    x = as_tensor(x)
    b, c, h, w = x.data.shape
    data = x.data.mean(axis=(2, 3), keepdims=True)

    def bwd(g):
        x._accumulate(np.broadcast_to(g / (h * w), x.data.shape).astype(x.data.dtype))

    return make_op(data, (x,), bwd)


def pool(x: Tensor, kind: str) -> Tensor:
    if kind == "max2x2":
        return maxpool2x2(x)
    if kind == "gap":
        return gap(x)
    raise ConfigurationError(f"unknown pool kind {kind!r}")


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

BCE_CLIP = 1e-7


def bce(pred: Tensor, target) -> Tensor:
    """Mean binary cross entropy with predictions clamped away from {0,1}.

    The gradient uses the clamped value, so saturated predictions still
    receive a finite, correctly signed pull.
    """
    pred = as_tensor(pred)
    y = target.data if isinstance(target, Tensor) else np.asarray(target)
    if y.shape != pred.data.shape:
        raise ConfigurationError(
            f"prediction {pred.data.shape} and target {y.shape} shapes differ")
    y = y.astype(pred.data.dtype, copy=False)
    eps = pred.data.dtype.type(BCE_CLIP)
    p = np.clip(pred.data, eps, 1 - eps)
    n = p.size
    data = np.asarray(-(y * np.log(p) + (1 - y) * np.log1p(-p)).mean(),
                      dtype=pred.data.dtype)

    def bwd(g):
        pred._accumulate(g * (p - y) / (p * (1 - p) * n))

    return make_op(data, (pred,), bwd)
