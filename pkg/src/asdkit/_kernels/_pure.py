"""Pure-NumPy reference kernels for the convolution hot loops.

Same contracts as the compiled twin in ``_fast.pyx``; selected at import by
the package ``__init__``. Layout is NHWC throughout, padding amounts are
explicit (computed by the caller for same-padding semantics).
"""

import numpy as np

BACKEND = "pure"


def _pad(x, pt, pb, pl, pr):
    if pt or pb or pl or pr:
        return np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    return x


def _patches(xp, k, stride, oh, ow):
    n, _, _, c = xp.shape
    sn, sh, sw, sc = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, oh, ow, k, k, c),
        strides=(sn, sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )


def im2col(x, k, stride, pt, pb, pl, pr, oh, ow):
    """(N,H,W,C) -> (N*OH*OW, k*k*C) patch matrix."""
    xp = _pad(x, pt, pb, pl, pr)
    p = _patches(xp, k, stride, oh, ow)
    n, _, _, c = xp.shape
    return np.ascontiguousarray(p).reshape(n * oh * ow, k * k * c)


def depthwise_conv2d(x, w, stride, pt, pb, pl, pr, oh, ow):
    """Depthwise 3x3 (or kxk) convolution; w has shape (k, k, C)."""
    xp = _pad(x, pt, pb, pl, pr)
    p = _patches(xp, w.shape[0], stride, oh, ow)
    return np.einsum("nhwklc,klc->nhwc", p, w, optimize=True)


def bias_relu_inplace(y, b):
    """y = max(y + b, 0), reusing y's storage."""
    y += b
    return np.maximum(y, 0.0, out=y)


def relu_mask_inplace(dy, y):
    """dy[y <= 0] = 0, reusing dy's storage."""
    np.multiply(dy, y > 0, out=dy)
    return dy


def depthwise_bias_relu(x, w, b, stride, pt, pb, pl, pr, oh, ow):
    """max(depthwise(x, w) + b, 0) in one logical pass."""
    y = depthwise_conv2d(x, w, stride, pt, pb, pl, pr, oh, ow)
    y += b
    return np.maximum(y, 0.0, out=y)


def depthwise_bias_relu_backward(x, w, y, dy, stride, pt, pb, pl, pr):
    """Gradients of depthwise_bias_relu given its own output y.

    Returns (dx, dw, db); the rectifier mask is recovered from y > 0.
    """
    g = np.where(y > 0, dy, 0.0).astype(dy.dtype, copy=False)
    dx, dw = depthwise_conv2d_backward(x, w, g, stride, pt, pb, pl, pr)
    return dx, dw, g.sum(axis=(0, 1, 2))


def depthwise_conv2d_backward(x, w, dy, stride, pt, pb, pl, pr):
    """Gradients of depthwise_conv2d w.r.t. input and weights."""
    k = w.shape[0]
    n, oh, ow, c = dy.shape
    xp = _pad(x, pt, pb, pl, pr)
    p = _patches(xp, k, stride, oh, ow)
    dw = np.einsum("nhwklc,nhwc->klc", p, dy, optimize=True)
    dxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + stride * oh : stride, j : j + stride * ow : stride, :] += (
                dy * w[i, j]
            )
    h, wd = x.shape[1], x.shape[2]
    dx = dxp[:, pt : pt + h, pl : pl + wd, :]
    return np.ascontiguousarray(dx), dw
