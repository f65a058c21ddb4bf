# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: depthwise conv, 2x2 max pool, channel 1-D conv.

Same call surface as `numpy_impl`; the dispatcher in
`sctransnet.backend` picks whichever is importable.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double

NAME = "compiled"


def depthwise_conv2d(x, w, stride, padding):
    b, c, h, wd = x.shape
    kh, kw = w.shape[2], w.shape[3]
    sy, sx = stride
    py, px = padding
    ho = (h + 2 * py - kh) // sy + 1
    wo = (wd + 2 * px - kw) // sx + 1
    out = np.zeros((b, c, ho, wo), dtype=x.dtype)
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    if x.dtype == np.float32:
        _dw_fwd[float](x, w, out, sy, sx, py, px)
    else:
        _dw_fwd[double](x, w, out, sy, sx, py, px)
    return out


cdef void _dw_fwd(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                  real[:, :, :, ::1] out,
                  Py_ssize_t sy, Py_ssize_t sx,
                  Py_ssize_t py, Py_ssize_t px) noexcept nogil:
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t n, ch, oy, ox, i, j, iy, ix
    cdef real acc
    for n in range(b):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0
                    for i in range(kh):
                        iy = oy * sy + i - py
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = ox * sx + j - px
                            if ix < 0 or ix >= wd:
                                continue
                            acc = acc + w[ch, 0, i, j] * x[n, ch, iy, ix]
                    out[n, ch, oy, ox] = acc


def depthwise_conv2d_grad_input(gout, w, in_shape, stride, padding):
    b, c, h, wd = in_shape
    sy, sx = stride
    py, px = padding
    gx = np.zeros((b, c, h, wd), dtype=gout.dtype)
    gout = np.ascontiguousarray(gout)
    w = np.ascontiguousarray(w)
    if gout.dtype == np.float32:
        _dw_gin[float](gout, w, gx, sy, sx, py, px)
    else:
        _dw_gin[double](gout, w, gx, sy, sx, py, px)
    return gx


cdef void _dw_gin(real[:, :, :, ::1] gout, real[:, :, :, ::1] w,
                  real[:, :, :, ::1] gx,
                  Py_ssize_t sy, Py_ssize_t sx,
                  Py_ssize_t py, Py_ssize_t px) noexcept nogil:
    cdef Py_ssize_t b = gx.shape[0], c = gx.shape[1], h = gx.shape[2], wd = gx.shape[3]
    cdef Py_ssize_t kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = gout.shape[2], wo = gout.shape[3]
    cdef Py_ssize_t n, ch, oy, ox, i, j, iy, ix
    cdef real g
    for n in range(b):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    g = gout[n, ch, oy, ox]
                    for i in range(kh):
                        iy = oy * sy + i - py
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = ox * sx + j - px
                            if ix < 0 or ix >= wd:
                                continue
                            gx[n, ch, iy, ix] += w[ch, 0, i, j] * g


def depthwise_conv2d_grad_weight(gout, x, kernel, stride, padding):
    kh, kw = kernel
    sy, sx = stride
    py, px = padding
    c = x.shape[1]
    gw = np.zeros((c, 1, kh, kw), dtype=x.dtype)
    gout = np.ascontiguousarray(gout)
    x = np.ascontiguousarray(x)
    if x.dtype == np.float32:
        _dw_gw[float](gout, x, gw, sy, sx, py, px)
    else:
        _dw_gw[double](gout, x, gw, sy, sx, py, px)
    return gw


cdef void _dw_gw(real[:, :, :, ::1] gout, real[:, :, :, ::1] x,
                 real[:, :, :, ::1] gw,
                 Py_ssize_t sy, Py_ssize_t sx,
                 Py_ssize_t py, Py_ssize_t px) noexcept nogil:
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t kh = gw.shape[2], kw = gw.shape[3]
    cdef Py_ssize_t ho = gout.shape[2], wo = gout.shape[3]
    cdef Py_ssize_t n, ch, oy, ox, i, j, iy, ix
    cdef real g
    for n in range(b):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    g = gout[n, ch, oy, ox]
                    for i in range(kh):
                        iy = oy * sy + i - py
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = ox * sx + j - px
                            if ix < 0 or ix >= wd:
                                continue
                            gw[ch, 0, i, j] += g * x[n, ch, iy, ix]


def maxpool2x2(x):
    b, c, h, w = x.shape
    out = np.empty((b, c, h // 2, w // 2), dtype=x.dtype)
    idx = np.empty((b, c, h // 2, w // 2), dtype=np.int8)
    x = np.ascontiguousarray(x)
    if x.dtype == np.float32:
        _pool_fwd[float](x, out, idx)
    else:
        _pool_fwd[double](x, out, idx)
    return out, idx


cdef void _pool_fwd(real[:, :, :, ::1] x, real[:, :, :, ::1] out,
                    cnp.int8_t[:, :, :, ::1] idx) noexcept nogil:
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t n, ch, oy, ox, i, j, k
    cdef real best, v
    cdef cnp.int8_t bestk
    for n in range(b):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    best = x[n, ch, 2 * oy, 2 * ox]
                    bestk = 0
                    for k in range(1, 4):
                        i = k >> 1
                        j = k & 1
                        v = x[n, ch, 2 * oy + i, 2 * ox + j]
                        if v > best:
                            best = v
                            bestk = <cnp.int8_t> k
                    out[n, ch, oy, ox] = best
                    idx[n, ch, oy, ox] = bestk


def maxpool2x2_backward(gout, idx, in_shape):
    gx = np.zeros(in_shape, dtype=gout.dtype)
    gout = np.ascontiguousarray(gout)
    if gout.dtype == np.float32:
        _pool_bwd[float](gout, idx, gx)
    else:
        _pool_bwd[double](gout, idx, gx)
    return gx


cdef void _pool_bwd(real[:, :, :, ::1] gout, cnp.int8_t[:, :, :, ::1] idx,
                    real[:, :, :, ::1] gx) noexcept nogil:
    cdef Py_ssize_t b = gout.shape[0], c = gout.shape[1]
    cdef Py_ssize_t ho = gout.shape[2], wo = gout.shape[3]
    cdef Py_ssize_t n, ch, oy, ox
    cdef cnp.int8_t k
    for n in range(b):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    k = idx[n, ch, oy, ox]
                    gx[n, ch, 2 * oy + (k >> 1), 2 * ox + (k & 1)] = gout[n, ch, oy, ox]


def conv1d_channel(x, w):
    out = np.zeros_like(x)
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    if x.dtype == np.float32:
        _c1d_fwd[float](x, w, out)
    else:
        _c1d_fwd[double](x, w, out)
    return out


cdef void _c1d_fwd(real[:, ::1] x, real[::1] w, real[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], k = w.shape[0]
    cdef Py_ssize_t p = (k - 1) // 2
    cdef Py_ssize_t n, i, j, src
    cdef real acc
    for n in range(b):
        for i in range(c):
            acc = 0
            for j in range(k):
                src = i + j - p
                if 0 <= src < c:
                    acc = acc + w[j] * x[n, src]
            out[n, i] = acc


def conv1d_channel_grad(gout, x, w):
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gout = np.ascontiguousarray(gout)
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    if x.dtype == np.float32:
        _c1d_bwd[float](gout, x, w, gx, gw)
    else:
        _c1d_bwd[double](gout, x, w, gx, gw)
    return gx, gw


cdef void _c1d_bwd(real[:, ::1] gout, real[:, ::1] x, real[::1] w,
                   real[:, ::1] gx, real[::1] gw) noexcept nogil:
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], k = w.shape[0]
    cdef Py_ssize_t p = (k - 1) // 2
    cdef Py_ssize_t n, i, j, src
    cdef real g
    for n in range(b):
        for i in range(c):
            g = gout[n, i]
            for j in range(k):
                src = i + j - p
                if 0 <= src < c:
                    gx[n, src] += w[j] * g
                    gw[j] += g * x[n, src]
