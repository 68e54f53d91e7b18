"""Convolution kernels with a compiled core and a pure-Python fallback.

The hot gather/scatter loops (im2col/col2im) come from the Cython extension
``_ckern`` when it is built, otherwise from the numpy implementation in
``_pykern``; the matrix products always go through BLAS as one GEMM per
pass. Selection happens at import and can be forced with
``HSICUBE_BACKEND=python`` or ``=c``. Both backends produce identical
results; see benchmarks/bench_kernels.py for the speed comparison.
"""

import os

import numpy as np

from ..errors import ShapeError
from . import _pykern

try:
    from . import _ckern
except ImportError:
    _ckern = None

_env = os.environ.get("HSICUBE_BACKEND", "").strip().lower()
if _env in ("python", "py"):
    _active = _pykern
elif _env in ("c", "cython", "compiled"):
    if _ckern is None:
        raise ImportError("HSICUBE_BACKEND=c requested but hsicube.kernels._ckern is not built")
    _active = _ckern
elif _env:
    raise ValueError(f"unknown HSICUBE_BACKEND value {_env!r}")
else:
    _active = _ckern if _ckern is not None else _pykern

BACKEND = "compiled" if _active is not _pykern else "python"


def available_impls():
    """Mapping of backend name -> implementation module, for tests/benchmarks."""
    impls = {"python": _pykern}
    if _ckern is not None:
        impls["compiled"] = _ckern
    return impls


def _out_extent(size, kernel, stride, pad, axis_name, where):
    if kernel < 1 or stride < 1 or pad < 0:
        raise ShapeError(f"{where}: bad kernel/stride/pad on {axis_name} axis")
    if size + 2 * pad < kernel:
        raise ShapeError(
            f"{where}: input extent {size} (+2*{pad} pad) smaller than kernel {kernel} on {axis_name} axis"
        )
    return (size + 2 * pad - kernel) // stride + 1


def _is_pointwise(kernel, stride, padding):
    return all(k == 1 for k in kernel) and all(s == 1 for s in stride) and all(
        p == 0 for p in padding
    )


def conv2d_forward(x, w, b, stride, padding, impl=None):
    """Cross-correlate x[N,C,H,W] with w[O,C,kh,kw]; returns (y, cols).

    ``cols`` is the lowered (K, N*L) patch matrix, kept for backward.
    """
    impl = impl or _active
    N, C, H, W = x.shape
    O, Cw, kh, kw = w.shape
    if Cw != C:
        raise ShapeError(f"conv2d: input has {C} channels, weights expect {Cw}")
    sh, sw = stride
    ph, pw = padding
    OH = _out_extent(H, kh, sh, ph, "height", "conv2d")
    OW = _out_extent(W, kw, sw, pw, "width", "conv2d")
    x = np.ascontiguousarray(x)
    if _is_pointwise((kh, kw), stride, padding):
        cols = np.ascontiguousarray(x.transpose(1, 0, 2, 3)).reshape(C, N * H * W)
    else:
        cols = impl.im2col2d(x, kh, kw, sh, sw, ph, pw)
    y = np.matmul(w.reshape(O, -1), cols)
    if b is not None:
        y += b[:, None]
    y = y.reshape(O, N, OH * OW).transpose(1, 0, 2).reshape(N, O, OH, OW)
    return y, cols


def conv2d_backward(g, x_shape, w, cols, stride, padding, impl=None, need_dx=True):
    """Gradients of conv2d_forward w.r.t. input, weights and bias.

    ``dx`` is None when need_dx is false (saves the col2im scatter for
    first-layer convolutions whose input is plain data).
    """
    impl = impl or _active
    N, C, H, W = x_shape
    O, _, kh, kw = w.shape
    gm = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(O, -1)
    dw = np.matmul(gm, cols.T).reshape(w.shape)
    db = gm.sum(axis=1)
    if not need_dx:
        return None, dw, db
    dcols = np.matmul(w.reshape(O, -1).T, gm)
    if _is_pointwise((kh, kw), stride, padding):
        dx = dcols.reshape(C, N, H * W).transpose(1, 0, 2).reshape(x_shape)
    else:
        sh, sw = stride
        ph, pw = padding
        dx = impl.col2im2d(np.ascontiguousarray(dcols), N, C, H, W, kh, kw, sh, sw, ph, pw)
    return dx, dw, db


def conv3d_forward(x, w, b, stride, padding, impl=None):
    """Cross-correlate x[N,C,D,H,W] with w[O,C,kd,kh,kw]; returns (y, cols)."""
    impl = impl or _active
    N, C, D, H, W = x.shape
    O, Cw, kd, kh, kw = w.shape
    if Cw != C:
        raise ShapeError(f"conv3d: input has {C} channels, weights expect {Cw}")
    sd, sh, sw = stride
    pd, ph, pw = padding
    OD = _out_extent(D, kd, sd, pd, "depth", "conv3d")
    OH = _out_extent(H, kh, sh, ph, "height", "conv3d")
    OW = _out_extent(W, kw, sw, pw, "width", "conv3d")
    x = np.ascontiguousarray(x)
    cols = impl.im2col3d(x, kd, kh, kw, sd, sh, sw, pd, ph, pw)
    y = np.matmul(w.reshape(O, -1), cols)
    if b is not None:
        y += b[:, None]
    y = y.reshape(O, N, OD * OH * OW).transpose(1, 0, 2).reshape(N, O, OD, OH, OW)
    return y, cols


def conv3d_backward(g, x_shape, w, cols, stride, padding, impl=None, need_dx=True):
    impl = impl or _active
    N, C, D, H, W = x_shape
    O, _, kd, kh, kw = w.shape
    gm = np.ascontiguousarray(g.transpose(1, 0, 2, 3, 4)).reshape(O, -1)
    dw = np.matmul(gm, cols.T).reshape(w.shape)
    db = gm.sum(axis=1)
    if not need_dx:
        return None, dw, db
    dcols = np.matmul(w.reshape(O, -1).T, gm)
    sd, sh, sw = stride
    pd, ph, pw = padding
    dx = impl.col2im3d(
        np.ascontiguousarray(dcols), N, C, D, H, W, kd, kh, kw, sd, sh, sw, pd, ph, pw
    )
    return dx, dw, db
