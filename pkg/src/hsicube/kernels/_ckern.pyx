# Compiled gather/scatter cores for the convolution kernels.
# The matrix products stay in BLAS; these loops do the im2col/col2im
# bookkeeping. Patch matrices are laid out (K, N*L) with K = C*prod(kernel)
# and L = prod(output extents) so each conv pass is a single GEMM.

import numpy as np

ctypedef fused floating:
    float
    double


def im2col2d(floating[:, :, :, ::1] x,
             Py_ssize_t kh, Py_ssize_t kw,
             Py_ssize_t sh, Py_ssize_t sw,
             Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t OH = (H + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t OW = (W + 2 * pw - kw) // sw + 1
    cdef Py_ssize_t L = OH * OW
    if floating is float:
        out_np = np.zeros((C * kh * kw, N * L), dtype=np.float32)
    else:
        out_np = np.zeros((C * kh * kw, N * L), dtype=np.float64)
    cdef floating[:, ::1] out = out_np
    cdef Py_ssize_t n, c, i, j, oh, ow, hi, wi, k, base
    for c in range(C):
        for i in range(kh):
            for j in range(kw):
                k = (c * kh + i) * kw + j
                for n in range(N):
                    for oh in range(OH):
                        hi = oh * sh + i - ph
                        if hi < 0 or hi >= H:
                            continue
                        base = n * L + oh * OW
                        for ow in range(OW):
                            wi = ow * sw + j - pw
                            if 0 <= wi < W:
                                out[k, base + ow] = x[n, c, hi, wi]
    return out_np


def col2im2d(floating[:, ::1] cols,
             Py_ssize_t N, Py_ssize_t C, Py_ssize_t H, Py_ssize_t W,
             Py_ssize_t kh, Py_ssize_t kw,
             Py_ssize_t sh, Py_ssize_t sw,
             Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t OH = (H + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t OW = (W + 2 * pw - kw) // sw + 1
    cdef Py_ssize_t L = OH * OW
    if floating is float:
        out_np = np.zeros((N, C, H, W), dtype=np.float32)
    else:
        out_np = np.zeros((N, C, H, W), dtype=np.float64)
    cdef floating[:, :, :, ::1] out = out_np
    cdef Py_ssize_t n, c, i, j, oh, ow, hi, wi, k, base
    for c in range(C):
        for i in range(kh):
            for j in range(kw):
                k = (c * kh + i) * kw + j
                for n in range(N):
                    for oh in range(OH):
                        hi = oh * sh + i - ph
                        if hi < 0 or hi >= H:
                            continue
                        base = n * L + oh * OW
                        for ow in range(OW):
                            wi = ow * sw + j - pw
                            if 0 <= wi < W:
                                out[n, c, hi, wi] += cols[k, base + ow]
    return out_np


def im2col3d(floating[:, :, :, :, ::1] x,
             Py_ssize_t kd, Py_ssize_t kh, Py_ssize_t kw,
             Py_ssize_t sd, Py_ssize_t sh, Py_ssize_t sw,
             Py_ssize_t pd, Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t D = x.shape[2], H = x.shape[3], W = x.shape[4]
    cdef Py_ssize_t OD = (D + 2 * pd - kd) // sd + 1
    cdef Py_ssize_t OH = (H + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t OW = (W + 2 * pw - kw) // sw + 1
    cdef Py_ssize_t L = OD * OH * OW
    if floating is float:
        out_np = np.zeros((C * kd * kh * kw, N * L), dtype=np.float32)
    else:
        out_np = np.zeros((C * kd * kh * kw, N * L), dtype=np.float64)
    cdef floating[:, ::1] out = out_np
    cdef Py_ssize_t n, c, d, i, j, od, oh, ow, di, hi, wi, k, base
    for c in range(C):
        for d in range(kd):
            for i in range(kh):
                for j in range(kw):
                    k = ((c * kd + d) * kh + i) * kw + j
                    for n in range(N):
                        for od in range(OD):
                            di = od * sd + d - pd
                            if di < 0 or di >= D:
                                continue
                            for oh in range(OH):
                                hi = oh * sh + i - ph
                                if hi < 0 or hi >= H:
                                    continue
                                base = n * L + (od * OH + oh) * OW
                                for ow in range(OW):
                                    wi = ow * sw + j - pw
                                    if 0 <= wi < W:
                                        out[k, base + ow] = x[n, c, di, hi, wi]
    return out_np


def col2im3d(floating[:, ::1] cols,
             Py_ssize_t N, Py_ssize_t C,
             Py_ssize_t D, Py_ssize_t H, Py_ssize_t W,
             Py_ssize_t kd, Py_ssize_t kh, Py_ssize_t kw,
             Py_ssize_t sd, Py_ssize_t sh, Py_ssize_t sw,
             Py_ssize_t pd, Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t OD = (D + 2 * pd - kd) // sd + 1
    cdef Py_ssize_t OH = (H + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t OW = (W + 2 * pw - kw) // sw + 1
    cdef Py_ssize_t L = OD * OH * OW
    if floating is float:
        out_np = np.zeros((N, C, D, H, W), dtype=np.float32)
    else:
        out_np = np.zeros((N, C, D, H, W), dtype=np.float64)
    cdef floating[:, :, :, :, ::1] out = out_np
    cdef Py_ssize_t n, c, d, i, j, od, oh, ow, di, hi, wi, k, base
    for c in range(C):
        for d in range(kd):
            for i in range(kh):
                for j in range(kw):
                    k = ((c * kd + d) * kh + i) * kw + j
                    for n in range(N):
                        for od in range(OD):
                            di = od * sd + d - pd
                            if di < 0 or di >= D:
                                continue
                            for oh in range(OH):
                                hi = oh * sh + i - ph
                                if hi < 0 or hi >= H:
                                    continue
                                base = n * L + (od * OH + oh) * OW
                                for ow in range(OW):
                                    wi = ow * sw + j - pw
                                    if 0 <= wi < W:
                                        out[n, c, di, hi, wi] += cols[k, base + ow]
    return out_np
