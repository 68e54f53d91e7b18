"""Differentiable operations over Tensors.

Each op computes its forward value with numpy (convolutions go through the
kernels backend) and records a closure that routes the output gradient to its
parents. Composite blocks (attention, squeeze-excitation) are built from the
primitives, so their gradients come from composition, not hand derivation.
"""

from __future__ import annotations

import numpy as np

from .. import kernels as K
from ..errors import ShapeError
from .tensor import Tensor, add_to_flow, make_op


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bw(g, flow):
        add_to_flow(flow, a, _unbroadcast(g, a.data.shape))
        add_to_flow(flow, b, _unbroadcast(g, b.data.shape))

    return make_op(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bw(g, flow):
        add_to_flow(flow, a, _unbroadcast(g * b.data, a.data.shape))
        add_to_flow(flow, b, _unbroadcast(g * a.data, b.data.shape))

    return make_op(out, (a, b), bw)


def _swap(x):
    return np.swapaxes(x, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = np.matmul(a.data, b.data)

    def bw(g, flow):
        if a.requires_grad:
            add_to_flow(flow, a, _unbroadcast(np.matmul(g, _swap(b.data)), a.data.shape))
        if b.requires_grad:
            add_to_flow(flow, b, _unbroadcast(np.matmul(_swap(a.data), g), b.data.shape))

    return make_op(out, (a, b), bw)


def reshape(t: Tensor, shape) -> Tensor:
    out = t.data.reshape(shape)

    def bw(g, flow):
        add_to_flow(flow, t, g.reshape(t.data.shape))

    return make_op(out, (t,), bw)


def transpose(t: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = t.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def bw(g, flow):
        add_to_flow(flow, t, g.transpose(inverse))

    return make_op(out, (t,), bw)


def concat(tensors, axis: int) -> Tensor:
    tensors = tuple(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g, flow):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            add_to_flow(flow, t, g[tuple(idx)])

    return make_op(out, tensors, bw)


def relu(t: Tensor) -> Tensor:
    out = np.maximum(t.data, 0)

    def bw(g, flow):
        add_to_flow(flow, t, g * (t.data > 0))

    return make_op(out, (t,), bw)


def sigmoid(t: Tensor) -> Tensor:
    x = t.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g, flow):
        add_to_flow(flow, t, g * out * (1.0 - out))

    return make_op(out, (t,), bw)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g, flow):
        inner = (g * out).sum(axis=axis, keepdims=True)
        add_to_flow(flow, t, (g - inner) * out)

    return make_op(out, (t,), bw)


def dropout(t: Tensor, p: float, training: bool, rng) -> Tensor:
    """Inverted-scaling dropout; identity when not training or p == 0."""
    if not (0 <= p < 1):
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return t
    keep = (rng.random(t.data.shape) >= p).astype(t.data.dtype) / (1.0 - p)
    out = t.data * keep

    def bw(g, flow):
        add_to_flow(flow, t, g * keep)

    return make_op(out, (t,), bw)


def global_avg_pool(t: Tensor) -> Tensor:
    """Mean over all spatial axes of an [N, C, ...] tensor -> [N, C]."""
    if t.ndim < 3:
        raise ShapeError(f"global_avg_pool expects [N, C, spatial...], got {t.shape}")
    axes = tuple(range(2, t.ndim))
    denom = np.prod([t.data.shape[a] for a in axes])
    out = t.data.mean(axis=axes)

    def bw(g, flow):
        expanded = (g / denom).reshape(g.shape + (1,) * len(axes))
        add_to_flow(flow, t, np.broadcast_to(expanded, t.data.shape))

    return make_op(out, (t,), bw)


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x[N,F] @ w[F,O] (+ b[O])."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(f"dense: {x.shape} @ {w.shape} mismatch")
    out = x.data @ w.data
    if b is not None:
        out = out + b.data

    def bw(g, flow):
        if x.requires_grad:
            add_to_flow(flow, x, g @ w.data.T)
        if w.requires_grad:
            add_to_flow(flow, w, x.data.T @ g)
        if b is not None and b.requires_grad:
            add_to_flow(flow, b, g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return make_op(out, parents, bw)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride=(1, 1), padding=(0, 0)) -> Tensor:
    y, cols = K.conv2d_forward(x.data, w.data, None if b is None else b.data, stride, padding)

    def bw(g, flow):
        dx, dw, db = K.conv2d_backward(
            g, x.data.shape, w.data, cols, stride, padding, need_dx=x.requires_grad
        )
        if dx is not None:
            add_to_flow(flow, x, dx)
        add_to_flow(flow, w, dw)
        if b is not None:
            add_to_flow(flow, b, db)

    parents = (x, w) if b is None else (x, w, b)
    return make_op(y, parents, bw)


def conv3d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride=(1, 1, 1), padding=(0, 0, 0)) -> Tensor:
    y, cols = K.conv3d_forward(x.data, w.data, None if b is None else b.data, stride, padding)

    def bw(g, flow):
        dx, dw, db = K.conv3d_backward(
            g, x.data.shape, w.data, cols, stride, padding, need_dx=x.requires_grad
        )
        if dx is not None:
            add_to_flow(flow, x, dx)
        add_to_flow(flow, w, dw)
        if b is not None:
            add_to_flow(flow, b, db)

    parents = (x, w) if b is None else (x, w, b)
    return make_op(y, parents, bw)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean, running_var,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Normalize over all axes but the channel axis (axis 1).

    Training mode uses batch statistics (population variance) and updates the
    running arrays in place; eval mode normalizes with the running stats.
    """
    if x.ndim < 2:
        raise ShapeError(f"batch_norm expects [N, C, ...], got {x.shape}")
    if x.data.shape[0] == 0:
        raise ValueError("batch_norm on a zero-size batch")
    C = x.data.shape[1]
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, C) + (1,) * (x.ndim - 2)

    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    def bw(g, flow):
        if gamma.requires_grad:
            add_to_flow(flow, gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            add_to_flow(flow, beta, g.sum(axis=axes))
        if x.requires_grad:
            gi = g * gamma.data.reshape(bshape)
            if training:
                m1 = gi.mean(axis=axes, keepdims=True)
                m2 = (gi * xhat).mean(axis=axes, keepdims=True)
                dx = (gi - m1 - xhat * m2) * inv_std.reshape(bshape)
            else:
                dx = gi * inv_std.reshape(bshape)
            add_to_flow(flow, x, dx)

    return make_op(out, (x, gamma, beta), bw)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of [N, K] logits against integer labels."""
    labels = np.asarray(labels)
    n, k = logits.data.shape
    if labels.shape != (n,):
        raise ValueError(f"labels must be shape ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    loge = np.log(np.exp(shifted).sum(axis=1))
    nll = loge - shifted[np.arange(n), labels]
    out = np.asarray(nll.mean(), dtype=logits.dtype)

    def bw(g, flow):
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        probs[np.arange(n), labels] -= 1.0
        add_to_flow(flow, logits, probs * (float(g) / n))

    return make_op(out, (logits,), bw)


def mean_all(t: Tensor) -> Tensor:
    out = np.asarray(t.data.mean(), dtype=t.dtype)

    def bw(g, flow):
        add_to_flow(flow, t, np.broadcast_to(np.asarray(g / t.size, dtype=t.dtype), t.data.shape))

    return make_op(out, (t,), bw)


def sum_all(t: Tensor) -> Tensor:
    out = np.asarray(t.data.sum(), dtype=t.dtype)

    def bw(g, flow):
        add_to_flow(flow, t, np.broadcast_to(np.asarray(g, dtype=t.dtype), t.data.shape))

    return make_op(out, (t,), bw)


def attention_block(x: Tensor, phi_w, phi_b, psi_w, psi_b, g_w, g_b,
                    out_w, out_b) -> Tensor:
    """Pairwise pixel attention with a residual connection.

    Three 1x1 convolutions embed the map into half the channels; a row
    softmax over the pixel-pair similarity matrix weights the value
    embedding; a final 1x1 convolution restores the channel count and the
    result is added to the input.
    """
    n, e, h, w = x.shape
    if e % 2:
        raise ShapeError(f"attention needs an even channel count, got {e}")
    half = e // 2
    p = h * w
    q = conv2d(x, phi_w, phi_b)
    k = conv2d(x, psi_w, psi_b)
    v = conv2d(x, g_w, g_b)
    qm = transpose(reshape(q, (n, half, p)), (0, 2, 1))
    km = reshape(k, (n, half, p))
    att = softmax(matmul(qm, km), axis=-1)
    vm = transpose(reshape(v, (n, half, p)), (0, 2, 1))
    o = matmul(att, vm)
    o = reshape(transpose(o, (0, 2, 1)), (n, half, h, w))
    return add(x, conv2d(o, out_w, out_b))


def attention_matrix(x_data, phi_w, psi_w, phi_b=None, psi_b=None):
    """The row-stochastic attention weights for a raw input array (no tape)."""
    x = Tensor(np.asarray(x_data))
    n, e, h, w = x.shape
    half = e // 2
    p = h * w
    q = conv2d(x, Tensor(phi_w), None if phi_b is None else Tensor(phi_b))
    k = conv2d(x, Tensor(psi_w), None if psi_b is None else Tensor(psi_b))
    qm = q.data.reshape(n, half, p).transpose(0, 2, 1)
    km = k.data.reshape(n, half, p)
    sim = np.matmul(qm, km)
    sim -= sim.max(axis=-1, keepdims=True)
    e_ = np.exp(sim)
    return e_ / e_.sum(axis=-1, keepdims=True)


def se_gate(u: Tensor, w1: Tensor, w2: Tensor, r: int) -> Tensor:
    """Squeeze-and-excitation: pool, two-layer sigmoid gate, channel scaling."""
    n, c = u.shape[0], u.shape[1]
    if c % r:
        raise ShapeError(f"channel count {c} not divisible by reduction {r}")
    if w1.shape != (c // r, c) or w2.shape != (c, c // r):
        raise ShapeError(
            f"gate weights must be ({c // r}, {c}) and ({c}, {c // r}), got {w1.shape}, {w2.shape}"
        )
    z = global_avg_pool(u)
    hidden = relu(matmul(z, transpose(w1, (1, 0))))
    s = sigmoid(matmul(hidden, transpose(w2, (1, 0))))
    return mul(u, reshape(s, (n, c) + (1,) * (u.ndim - 2)))
