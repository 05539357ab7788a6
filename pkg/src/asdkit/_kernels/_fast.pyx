# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the _pure kernels (NHWC, explicit padding)."""

import cython
import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

BACKEND = "fast"

ctypedef fused floating:
    float
    double


def im2col(x, int k, int stride, int pt, int pb, int pl, int pr, int oh, int ow):
    x = np.ascontiguousarray(x)
    if x.dtype == np.float32:
        return _im2col["float"](x, k, stride, pt, pl, oh, ow)
    return _im2col["double"](x, k, stride, pt, pl, oh, ow)


@cython.boundscheck(False)
def _im2col(floating[:, :, :, ::1] x, int k, int stride, int pt, int pl,
            int oh, int ow):
    cdef int n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    out_np = np.zeros((n * oh * ow, k * k * c),
                      dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] out = out_np
    cdef int b, i, j, ki, kj, ch, si, sj, row
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    row = (b * oh + i) * ow + j
                    for ki in range(k):
                        si = i * stride - pt + ki
                        if si < 0 or si >= h:
                            continue
                        for kj in range(k):
                            sj = j * stride - pl + kj
                            if sj < 0 or sj >= w:
                                continue
                            for ch in range(c):
                                out[row, (ki * k + kj) * c + ch] = x[b, si, sj, ch]
    return out_np


def depthwise_conv2d(x, w, int stride, int pt, int pb, int pl, int pr,
                     int oh, int ow):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    if x.dtype == np.float32:
        return _dw_fwd["float"](x, w, stride, pt, pl, oh, ow)
    return _dw_fwd["double"](x, w, stride, pt, pl, oh, ow)


@cython.boundscheck(False)
def _dw_fwd(floating[:, :, :, ::1] x, floating[:, :, ::1] w, int stride,
            int pt, int pl, int oh, int ow):
    cdef int n = x.shape[0], h = x.shape[1], wd = x.shape[2], c = x.shape[3]
    cdef int k = w.shape[0]
    y_np = np.zeros((n, oh, ow, c),
                    dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] y = y_np
    cdef int b, i, j, ki, kj, ch, si, sj
    cdef floating acc
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    for ki in range(k):
                        si = i * stride - pt + ki
                        if si < 0 or si >= h:
                            continue
                        for kj in range(k):
                            sj = j * stride - pl + kj
                            if sj < 0 or sj >= wd:
                                continue
                            for ch in range(c):
                                y[b, i, j, ch] += x[b, si, sj, ch] * w[ki, kj, ch]
    return y_np


def bias_relu_inplace(y, b):
    """y = max(y + b, 0) in one pass over y (flattened over leading dims)."""
    y2 = y.reshape(-1, y.shape[y.ndim - 1])  # positive index: wraparound is off
    b = np.ascontiguousarray(b, dtype=y.dtype)
    if y.dtype == np.float32:
        _bias_relu["float"](y2, b)
    else:
        _bias_relu["double"](y2, b)
    return y


@cython.boundscheck(False)
def _bias_relu(floating[:, ::1] y, floating[::1] b):
    cdef Py_ssize_t n = y.shape[0], c = y.shape[1], i, j
    cdef floating v
    with nogil:
        for i in range(n):
            for j in range(c):
                v = y[i, j] + b[j]
                y[i, j] = v if v > 0 else 0

def relu_mask_inplace(dy, y):
    """dy[y <= 0] = 0, in place, streaming over both arrays once."""
    if not (dy.flags["C_CONTIGUOUS"] and y.flags["C_CONTIGUOUS"] and dy.dtype == y.dtype):
        np.multiply(dy, y > 0, out=dy)
        return dy
    if dy.dtype == np.float32:
        _relu_mask["float"](dy.reshape(-1), y.reshape(-1))
    else:
        _relu_mask["double"](dy.reshape(-1), y.reshape(-1))
    return dy


@cython.boundscheck(False)
def _relu_mask(floating[::1] dy, floating[::1] y):
    cdef Py_ssize_t n = dy.shape[0], i
    with nogil:
        for i in range(n):
            if y[i] <= 0:
                dy[i] = 0


def depthwise_bias_relu(x, w, b, int stride, int pt, int pb, int pl, int pr,
                        int oh, int ow):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    b = np.ascontiguousarray(b, dtype=x.dtype)
    if x.dtype == np.float32:
        return _dw_bias_relu["float"](x, w, b, stride, pt, pl, oh, ow)
    return _dw_bias_relu["double"](x, w, b, stride, pt, pl, oh, ow)


@cython.boundscheck(False)
def _dw_bias_relu(floating[:, :, :, ::1] x, floating[:, :, ::1] w,
                  floating[::1] b, int stride, int pt, int pl, int oh, int ow):
    cdef int n = x.shape[0], h = x.shape[1], wd = x.shape[2], c = x.shape[3]
    cdef int k = w.shape[0]
    y_np = np.empty((n, oh, ow, c),
                    dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] y = y_np
    cdef int bb, i, j, ki, kj, ch, si, sj
    with nogil:
        for bb in range(n):
            for i in range(oh):
                for j in range(ow):
                    for ch in range(c):
                        y[bb, i, j, ch] = b[ch]
                    for ki in range(k):
                        si = i * stride - pt + ki
                        if si < 0 or si >= h:
                            continue
                        for kj in range(k):
                            sj = j * stride - pl + kj
                            if sj < 0 or sj >= wd:
                                continue
                            for ch in range(c):
                                y[bb, i, j, ch] += x[bb, si, sj, ch] * w[ki, kj, ch]
                    for ch in range(c):
                        if y[bb, i, j, ch] < 0:
                            y[bb, i, j, ch] = 0
    return y_np


def depthwise_bias_relu_backward(x, w, y, dy, int stride, int pt, int pb,
                                 int pl, int pr):
    """dy is masked in place by the cached rectifier output first, so the
    conv backward stays branchless (and vectorizable)."""
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    y = np.ascontiguousarray(y, dtype=x.dtype)
    dy = np.ascontiguousarray(dy, dtype=x.dtype)
    relu_mask_inplace(dy, y)
    if x.dtype == np.float32:
        return _dw_bias_relu_bwd["float"](x, w, dy, stride, pt, pl)
    return _dw_bias_relu_bwd["double"](x, w, dy, stride, pt, pl)


@cython.boundscheck(False)
def _dw_bias_relu_bwd(floating[:, :, :, ::1] x, floating[:, :, ::1] w,
                      floating[:, :, :, ::1] dy, int stride, int pt, int pl):
    cdef int n = x.shape[0], h = x.shape[1], wd = x.shape[2], c = x.shape[3]
    cdef int k = w.shape[0], oh = dy.shape[1], ow = dy.shape[2]
    dtype = np.float32 if floating is float else np.float64
    dx_np = np.zeros((n, h, wd, c), dtype=dtype)
    dw_np = np.zeros((k, k, c), dtype=dtype)
    db_np = np.zeros(c, dtype=dtype)
    cdef floating[:, :, :, ::1] dx = dx_np
    cdef floating[:, :, ::1] dw = dw_np
    cdef floating[::1] db = db_np
    cdef int b, i, j, ki, kj, ch, si, sj
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    for ch in range(c):
                        db[ch] += dy[b, i, j, ch]
                    for ki in range(k):
                        si = i * stride - pt + ki
                        if si < 0 or si >= h:
                            continue
                        for kj in range(k):
                            sj = j * stride - pl + kj
                            if sj < 0 or sj >= wd:
                                continue
                            for ch in range(c):
                                dx[b, si, sj, ch] += dy[b, i, j, ch] * w[ki, kj, ch]
                                dw[ki, kj, ch] += dy[b, i, j, ch] * x[b, si, sj, ch]
    return dx_np, dw_np, db_np


def depthwise_conv2d_backward(x, w, dy, int stride, int pt, int pb, int pl, int pr):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    dy = np.ascontiguousarray(dy, dtype=x.dtype)
    if x.dtype == np.float32:
        return _dw_bwd["float"](x, w, dy, stride, pt, pl)
    return _dw_bwd["double"](x, w, dy, stride, pt, pl)


@cython.boundscheck(False)
def _dw_bwd(floating[:, :, :, ::1] x, floating[:, :, ::1] w,
            floating[:, :, :, ::1] dy, int stride, int pt, int pl):
    cdef int n = x.shape[0], h = x.shape[1], wd = x.shape[2], c = x.shape[3]
    cdef int k = w.shape[0], oh = dy.shape[1], ow = dy.shape[2]
    dtype = np.float32 if floating is float else np.float64
    dx_np = np.zeros((n, h, wd, c), dtype=dtype)
    dw_np = np.zeros((k, k, c), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = dx_np
    cdef floating[:, :, ::1] dw = dw_np
    cdef int b, i, j, ki, kj, ch, si, sj
    cdef floating g
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    for ki in range(k):
                        si = i * stride - pt + ki
                        if si < 0 or si >= h:
                            continue
                        for kj in range(k):
                            sj = j * stride - pl + kj
                            if sj < 0 or sj >= wd:
                                continue
                            for ch in range(c):
                                g = dy[b, i, j, ch]
                                dx[b, si, sj, ch] += g * w[ki, kj, ch]
                                dw[ki, kj, ch] += g * x[b, si, sj, ch]
    return dx_np, dw_np
