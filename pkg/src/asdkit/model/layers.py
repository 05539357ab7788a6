"""Differentiable layer primitives (NHWC, explicit forward/backward pairs).

Every forward returns (output, cache); the matching backward consumes the
upstream gradient and the cache. Convolutions use same-padding with
ceiling division on strided dims (out = ceil(in / stride)).
"""

from __future__ import annotations

import numpy as np

from .. import _kernels


def same_pad(size: int, k: int, stride: int) -> tuple[int, int, int]:
    """Returns (out_size, pad_begin, pad_end)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    beg = total // 2
    return out, beg, total - beg


# -- full convolution (stem); dx is never needed (first layer) --------------


def conv_same_forward(x, w, b, stride):
    n, h, wd, cin = x.shape
    k = int(round((w.shape[0] / cin) ** 0.5))
    oh, pt, pb = same_pad(h, k, stride)
    ow, pl, pr = same_pad(wd, k, stride)
    cols = _kernels.im2col(x, k, stride, pt, pb, pl, pr, oh, ow)
    y = (cols @ w + b).reshape(n, oh, ow, -1)
    return y, (cols, w.shape)


def conv_same_backward_params(dy, cache):
    cols, wshape = cache
    dy2 = dy.reshape(-1, dy.shape[-1])
    return cols.T @ dy2, dy2.sum(axis=0)


def conv_relu_forward(x, w, b, stride):
    """Stem conv with the rectifier fused in; caches only (cols, y)."""
    y, (cols, _) = conv_same_forward(x, w, b, stride)
    np.maximum(y, 0.0, out=y)
    return y, (cols, y)


def conv_relu_backward_params(dy, cache):
    """dy is consumed in place (masked by the cached rectifier output)."""
    cols, y = cache
    dy2 = _kernels.relu_mask_inplace(dy, y).reshape(-1, dy.shape[-1])
    return cols.T @ dy2, dy2.sum(axis=0)


# -- depthwise 3x3 ----------------------------------------------------------


def depthwise_forward(x, w, b, stride):
    n, h, wd, c = x.shape
    k = w.shape[0]
    oh, pt, pb = same_pad(h, k, stride)
    ow, pl, pr = same_pad(wd, k, stride)
    y = _kernels.depthwise_conv2d(x, w, stride, pt, pb, pl, pr, oh, ow) + b
    return y, (x, w, stride, pt, pb, pl, pr)


def depthwise_backward(dy, cache):
    x, w, stride, pt, pb, pl, pr = cache
    dx, dw = _kernels.depthwise_conv2d_backward(x, w, dy, stride, pt, pb, pl, pr)
    return dx, dw, dy.sum(axis=(0, 1, 2))


def depthwise_relu_forward(x, w, b, stride):
    """Depthwise conv + bias + rectifier in one kernel pass."""
    n, h, wd, c = x.shape
    k = w.shape[0]
    oh, pt, pb = same_pad(h, k, stride)
    ow, pl, pr = same_pad(wd, k, stride)
    y = _kernels.depthwise_bias_relu(x, w, b, stride, pt, pb, pl, pr, oh, ow)
    return y, (x, w, y, stride, pt, pb, pl, pr)


def depthwise_relu_backward(dy, cache):
    x, w, y, stride, pt, pb, pl, pr = cache
    return _kernels.depthwise_bias_relu_backward(x, w, y, dy, stride, pt, pb, pl, pr)


# -- pointwise 1x1 (a matmul over channels) ---------------------------------


def pointwise_forward(x, w, b):
    y = x @ w + b
    return y, (x, w)


def pointwise_backward(dy, cache):
    x, w = cache
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dx = (dy2 @ w.T).reshape(x.shape)
    return dx, x2.T @ dy2, dy2.sum(axis=0)


def pointwise_relu_forward(x, w, b):
    """1x1 conv + bias + rectifier; caches the rectified output."""
    y = _kernels.bias_relu_inplace(x @ w, b)
    return y, (x, w, y)


def pointwise_relu_backward(dy, cache):
    """dy is consumed in place (masked by the cached rectifier output)."""
    x, w, y = cache
    g2 = _kernels.relu_mask_inplace(dy, y).reshape(-1, dy.shape[-1])
    x2 = x.reshape(-1, x.shape[-1])
    dx = (g2 @ w.T).reshape(x.shape)
    return dx, x2.T @ g2, g2.sum(axis=0)


# -- elementwise / pooling / dense ------------------------------------------


def relu_forward(x):
    y = np.maximum(x, 0)
    return y, (x > 0)


def relu_backward(dy, mask):
    return dy * mask


def avgpool_forward(x):
    """Mean over all remaining spatial positions: (N,H,W,C) -> (N,C)."""
    return x.mean(axis=(1, 2)), x.shape


def avgpool_backward(dy, shape):
    n, h, w, c = shape
    return np.broadcast_to(dy[:, None, None, :], shape) / (h * w)


def fc_forward(x, w, b):
    return x @ w + b, (x, w)


def fc_backward(dy, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


# -- softmax + cross entropy -------------------------------------------------

PROB_CLAMP = 1e-7


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, targets, mask):
    """Masked binary cross entropy through a 2-way softmax.

    ``targets`` in {0,1} select class 1 (speaking); returns (loss_sum,
    probs, dlogits) where loss is summed over unmasked positions and
    dlogits is the exact gradient of that sum.
    """
    p = softmax(logits)
    m = mask.astype(p.dtype)
    p1 = np.clip(p[..., 1], PROB_CLAMP, 1.0 - PROB_CLAMP)
    losses = -(targets * np.log(p1) + (1.0 - targets) * np.log1p(-p1))
    loss = float((losses * m).sum())
    onehot = np.stack([1.0 - targets, targets], axis=-1)
    dlogits = (p - onehot) * m[..., None]
    return loss, p, dlogits


# -- GRU ---------------------------------------------------------------------
# Gate layout along the 3H axis: [update z | reset r | candidate c].
# h_t = (1 - z) * h_prev + z * c,  c = tanh(x Wxc + (r * h_prev) Whc + bc)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_forward(x, h0, wx, wh, b):
    """x: (B,S,D), h0: (B,H) -> (hs: (B,S,H), hT, caches)."""
    bsz, steps, _ = x.shape
    hdim = h0.shape[1]
    h = h0
    hs = np.empty((bsz, steps, hdim), dtype=x.dtype)
    caches = []
    for t in range(steps):
        xt = x[:, t]
        gx = xt @ wx + b
        gh = h @ wh
        z = _sigmoid(gx[:, :hdim] + gh[:, :hdim])
        r = _sigmoid(gx[:, hdim : 2 * hdim] + gh[:, hdim : 2 * hdim])
        rh = r * h
        c = np.tanh(gx[:, 2 * hdim :] + rh @ wh[:, 2 * hdim :])
        h_new = (1.0 - z) * h + z * c
        caches.append((xt, h, z, r, rh, c))
        hs[:, t] = h_new
        h = h_new
    return hs, h, caches


def gru_backward(dhs, dhT, caches, wx, wh):
    """dhs: (B,S,H) upstream per-step grads; dhT: grad on the final state."""
    bsz, steps, hdim = dhs.shape
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(wx.shape[1], dtype=wx.dtype)
    dx = np.empty((bsz, steps, wx.shape[0]), dtype=wx.dtype)
    dh = dhT.copy()
    for t in range(steps - 1, -1, -1):
        dh = dh + dhs[:, t]
        xt, h_prev, z, r, rh, c = caches[t]
        dz = dh * (c - h_prev) * z * (1.0 - z)
        dc = dh * z * (1.0 - c * c)
        dh_prev = dh * (1.0 - z)
        # candidate path
        drh = dc @ wh[:, 2 * hdim :].T
        dwh[:, 2 * hdim :] += rh.T @ dc
        dr = drh * h_prev * r * (1.0 - r)
        dh_prev += drh * r
        # gate paths
        dgates = np.concatenate([dz, dr], axis=1)  # pre-activation grads z|r
        dwh[:, : 2 * hdim] += h_prev.T @ dgates
        dh_prev += dgates @ wh[:, : 2 * hdim].T
        gx_grad = np.concatenate([dgates, dc], axis=1)
        dwx += xt.T @ gx_grad
        db += gx_grad.sum(axis=0)
        dx[:, t] = gx_grad @ wx.T
        dh = dh_prev
    return dx, dh, dwx, dwh, db
