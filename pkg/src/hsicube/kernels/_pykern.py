"""Pure-numpy fallback for the gather/scatter convolution cores.

Same contracts as the compiled module: im2col lowers patches to a
(C*prod(kernel), N*prod(out)) matrix, col2im scatter-adds it back. The
gather uses stride tricks; the scatter uses bincount, which keeps the inner
loop in C at the cost of an index build per call.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _pad2d(x, ph, pw):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def im2col2d(x, kh, kw, sh, sw, ph, pw):
    N, C, H, W = x.shape
    OH = (H + 2 * ph - kh) // sh + 1
    OW = (W + 2 * pw - kw) // sw + 1
    xp = _pad2d(x, ph, pw)
    s = xp.strides
    view = as_strided(
        xp,
        shape=(N, C, kh, kw, OH, OW),
        strides=(s[0], s[1], s[2], s[3], s[2] * sh, s[3] * sw),
    )
    return view.transpose(1, 2, 3, 0, 4, 5).reshape(C * kh * kw, N * OH * OW)


def _scatter_indices2d(C, Hp, Wp, kh, kw, sh, sw, OH, OW):
    """Flat padded-image index for each (k, l) patch-matrix cell."""
    c = np.repeat(np.arange(C), kh * kw)
    i = np.tile(np.repeat(np.arange(kh), kw), C)
    j = np.tile(np.arange(kw), C * kh)
    oh = np.repeat(np.arange(OH), OW)
    ow = np.tile(np.arange(OW), OH)
    rows = i[:, None] + oh[None, :] * sh
    cols = j[:, None] + ow[None, :] * sw
    return c[:, None] * (Hp * Wp) + rows * Wp + cols


def col2im2d(cols, N, C, H, W, kh, kw, sh, sw, ph, pw):
    Hp, Wp = H + 2 * ph, W + 2 * pw
    OH = (H + 2 * ph - kh) // sh + 1
    OW = (W + 2 * pw - kw) // sw + 1
    idx = _scatter_indices2d(C, Hp, Wp, kh, kw, sh, sw, OH, OW)
    per = np.ascontiguousarray(
        cols.reshape(-1, N, OH * OW).transpose(1, 0, 2)
    ).reshape(N, -1)
    size = C * Hp * Wp
    flat = idx.ravel()
    out = np.empty((N, size), dtype=cols.dtype)
    for n in range(N):
        out[n] = np.bincount(flat, weights=per[n], minlength=size)
    xp = out.reshape(N, C, Hp, Wp)
    return np.ascontiguousarray(xp[:, :, ph:Hp - ph, pw:Wp - pw])


def _pad3d(x, pd, ph, pw):
    if pd == 0 and ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pd, pd), (ph, ph), (pw, pw)))


def im2col3d(x, kd, kh, kw, sd, sh, sw, pd, ph, pw):
    N, C, D, H, W = x.shape
    OD = (D + 2 * pd - kd) // sd + 1
    OH = (H + 2 * ph - kh) // sh + 1
    OW = (W + 2 * pw - kw) // sw + 1
    xp = _pad3d(x, pd, ph, pw)
    s = xp.strides
    view = as_strided(
        xp,
        shape=(N, C, kd, kh, kw, OD, OH, OW),
        strides=(s[0], s[1], s[2], s[3], s[4], s[2] * sd, s[3] * sh, s[4] * sw),
    )
    return view.transpose(1, 2, 3, 4, 0, 5, 6, 7).reshape(
        C * kd * kh * kw, N * OD * OH * OW
    )


def _scatter_indices3d(C, Dp, Hp, Wp, kd, kh, kw, sd, sh, sw, OD, OH, OW):
    c = np.repeat(np.arange(C), kd * kh * kw)
    d = np.tile(np.repeat(np.arange(kd), kh * kw), C)
    i = np.tile(np.repeat(np.arange(kh), kw), C * kd)
    j = np.tile(np.arange(kw), C * kd * kh)
    od = np.repeat(np.arange(OD), OH * OW)
    oh = np.tile(np.repeat(np.arange(OH), OW), OD)
    ow = np.tile(np.arange(OW), OD * OH)
    depths = d[:, None] + od[None, :] * sd
    rows = i[:, None] + oh[None, :] * sh
    cols = j[:, None] + ow[None, :] * sw
    return ((c[:, None] * Dp + depths) * Hp + rows) * Wp + cols


def col2im3d(cols, N, C, D, H, W, kd, kh, kw, sd, sh, sw, pd, ph, pw):
    Dp, Hp, Wp = D + 2 * pd, H + 2 * ph, W + 2 * pw
    OD = (D + 2 * pd - kd) // sd + 1
    OH = (H + 2 * ph - kh) // sh + 1
    OW = (W + 2 * pw - kw) // sw + 1
    idx = _scatter_indices3d(C, Dp, Hp, Wp, kd, kh, kw, sd, sh, sw, OD, OH, OW)
    per = np.ascontiguousarray(
        cols.reshape(-1, N, OD * OH * OW).transpose(1, 0, 2)
    ).reshape(N, -1)
    size = C * Dp * Hp * Wp
    flat = idx.ravel()
    out = np.empty((N, size), dtype=cols.dtype)
    for n in range(N):
        out[n] = np.bincount(flat, weights=per[n], minlength=size)
    xp = out.reshape(N, C, Dp, Hp, Wp)
    return np.ascontiguousarray(xp[:, :, pd:Dp - pd, ph:Hp - ph, pw:Wp - pw])
