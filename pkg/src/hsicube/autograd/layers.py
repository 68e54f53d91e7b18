"""Parameterized network blocks assembled from the functional ops.

A Module owns Parameters and child Modules; discovery walks instance
attributes in insertion order, so parameter iteration (and therefore
initialization, checkpoints, and the optimizer state) is deterministic for a
fixed build order.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import ops
from .tensor import Parameter, Tensor


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Module:
    def __init__(self):
        self.training = True

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f"{prefix}{key}", value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def set_training(self, flag: bool):
        for m in self.modules():
            m.training = bool(flag)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def assign_parameter_names(self, prefix=""):
        """Stamp checkpoint names onto parameters; returns the name list."""
        names = []
        for name, p in self.named_parameters(prefix):
            p.name = name
            names.append(name)
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in model")
        return names


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=(1, 1), padding=(0, 0),
                 rng=None, dtype=np.float32, bias=True):
        super().__init__()
        kh, kw = kernel
        self.stride = tuple(stride)
        self.padding = tuple(padding)
        fan_in = in_ch * kh * kw
        fan_out = out_ch * kh * kw
        self.w = Parameter(glorot_uniform(rng, (out_ch, in_ch, kh, kw), fan_in, fan_out, dtype))
        self.b = Parameter(np.zeros(out_ch, dtype=dtype)) if bias else None

    def __call__(self, x):
        return ops.conv2d(x, self.w, self.b, self.stride, self.padding)


class Conv3d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=(1, 1, 1), padding=(0, 0, 0),
                 rng=None, dtype=np.float32, bias=True):
        super().__init__()
        kd, kh, kw = kernel
        self.stride = tuple(stride)
        self.padding = tuple(padding)
        fan_in = in_ch * kd * kh * kw
        fan_out = out_ch * kd * kh * kw
        self.w = Parameter(
            glorot_uniform(rng, (out_ch, in_ch, kd, kh, kw), fan_in, fan_out, dtype)
        )
        self.b = Parameter(np.zeros(out_ch, dtype=dtype)) if bias else None

    def __call__(self, x):
        return ops.conv3d(x, self.w, self.b, self.stride, self.padding)


class BatchNorm(Module):
    """Batch normalization over every axis but the channel axis."""

    def __init__(self, channels, dtype=np.float32, momentum=0.1, eps=1e-5):
        super().__init__()
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x):
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean,
                              self.running_var, self.training, self.momentum, self.eps)


class Dense(Module):
    def __init__(self, in_features, out_features, rng=None, dtype=np.float32, bias=True):
        super().__init__()
        self.w = Parameter(
            glorot_uniform(rng, (in_features, out_features), in_features, out_features, dtype)
        )
        self.b = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def __call__(self, x):
        return ops.dense(x, self.w, self.b)


class Dropout(Module):
    def __init__(self, p, rng):
        super().__init__()
        self.p = p
        self.rng = rng

    def __call__(self, x):
        return ops.dropout(x, self.p, self.training, self.rng)


class AttentionBlock(Module):
    """Residual pairwise-pixel attention over an [N, E, h, w] map."""

    def __init__(self, channels, rng=None, dtype=np.float32):
        super().__init__()
        if channels % 2:
            raise ShapeError(f"attention needs an even channel count, got {channels}")
        half = channels // 2
        self.phi = Conv2d(channels, half, (1, 1), rng=rng, dtype=dtype)
        self.psi = Conv2d(channels, half, (1, 1), rng=rng, dtype=dtype)
        self.g = Conv2d(channels, half, (1, 1), rng=rng, dtype=dtype)
        self.out = Conv2d(half, channels, (1, 1), rng=rng, dtype=dtype)

    def __call__(self, x):
        return ops.attention_block(
            x, self.phi.w, self.phi.b, self.psi.w, self.psi.b,
            self.g.w, self.g.b, self.out.w, self.out.b,
        )

    def zero_output_projection(self):
        """Silence the block: with a zero output conv it is exactly identity."""
        self.out.w.data[...] = 0
        self.out.b.data[...] = 0


def se_reduction(channels, preferred=None):
    """Reduction ratio: 16 when it divides the channels, 4 for narrow maps,
    otherwise the largest divisor not above the preferred value."""
    r = preferred if preferred is not None else (16 if channels >= 16 else 4)
    while r > 1 and channels % r:
        r -= 1
    return max(r, 1)


class SEGate(Module):
    def __init__(self, channels, reduction, rng=None, dtype=np.float32):
        super().__init__()
        if channels % reduction:
            raise ShapeError(f"channels {channels} not divisible by reduction {reduction}")
        self.reduction = reduction
        hidden = channels // reduction
        self.w1 = Parameter(glorot_uniform(rng, (hidden, channels), channels, hidden, dtype))
        self.w2 = Parameter(glorot_uniform(rng, (channels, hidden), hidden, channels, dtype))

    def __call__(self, u):
        return ops.se_gate(u, self.w1, self.w2, self.reduction)


class SEResNetUnit(Module):
    """Residual block whose output map is channel-recalibrated before the skip add."""

    def __init__(self, channels, reduction=None, rng=None, dtype=np.float32):
        super().__init__()
        self.conv1 = Conv2d(channels, channels, (3, 3), padding=(1, 1), rng=rng, dtype=dtype)
        self.bn1 = BatchNorm(channels, dtype=dtype)
        self.conv2 = Conv2d(channels, channels, (3, 3), padding=(1, 1), rng=rng, dtype=dtype)
        self.bn2 = BatchNorm(channels, dtype=dtype)
        self.se = SEGate(channels, se_reduction(channels, reduction), rng=rng, dtype=dtype)

    def __call__(self, x):
        h = ops.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        h = self.se(h)
        return ops.relu(ops.add(x, h))


class ConvBNRelu2d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=(1, 1), padding=(0, 0),
                 rng=None, dtype=np.float32):
        super().__init__()
        self.conv = Conv2d(in_ch, out_ch, kernel, stride, padding, rng=rng, dtype=dtype)
        self.bn = BatchNorm(out_ch, dtype=dtype)

    def __call__(self, x):
        return ops.relu(self.bn(self.conv(x)))


class ConvBNRelu3d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=(1, 1, 1), padding=(0, 0, 0),
                 rng=None, dtype=np.float32):
        super().__init__()
        self.conv = Conv3d(in_ch, out_ch, kernel, stride, padding, rng=rng, dtype=dtype)
        self.bn = BatchNorm(out_ch, dtype=dtype)

    def __call__(self, x):
        return ops.relu(self.bn(self.conv(x)))
