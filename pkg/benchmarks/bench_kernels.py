#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-Python fallback.

Times im2col/col2im-backed convolution forward+backward passes on the shapes
the classifier actually runs at its reference geometry (11 x 11 patches,
10 bands, batch 16), plus the attention-sized pointwise convs for context.

Run:  python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from hsicube import kernels

# (label, kind, x_shape, w_shape, stride, padding)
CASES = [
    ("2d stage1 (input 10ch 11x11)", "2d", (16, 10, 11, 11), (32, 10, 3, 3), (1, 1), (0, 0)),
    ("2d stage2 (fused 88ch 9x9)", "2d", (16, 88, 9, 9), (32, 88, 3, 3), (1, 1), (0, 0)),
    ("2d se-unit conv (88ch 9x9)", "2d", (16, 88, 9, 9), (88, 88, 3, 3), (1, 1), (1, 1)),
    ("2d stage3 stride-2 (64ch 7x7)", "2d", (16, 64, 7, 7), (32, 64, 2, 2), (2, 2), (0, 0)),
    ("3d stage1 (1ch 10x11x11)", "3d", (16, 1, 10, 11, 11), (8, 1, 4, 3, 3), (1, 1, 1), (0, 0, 0)),
    ("3d stage2 (8ch 7x9x9)", "3d", (16, 8, 7, 9, 9), (8, 8, 4, 3, 3), (1, 1, 1), (0, 0, 0)),
]


def run_case(impl, kind, x, w, b, stride, padding, repeats):
    if kind == "2d":
        fwd, bwd = kernels.conv2d_forward, kernels.conv2d_backward
    else:
        fwd, bwd = kernels.conv3d_forward, kernels.conv3d_backward
    y, cols = fwd(x, w, b, stride, padding, impl=impl)
    g = np.ones_like(y)
    bwd(g, x.shape, w, cols, stride, padding, impl=impl)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        y, cols = fwd(x, w, b, stride, padding, impl=impl)
        bwd(g, x.shape, w, cols, stride, padding, impl=impl)
    return (time.perf_counter() - t0) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=30)
    parser.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    args = parser.parse_args()

    impls = kernels.available_impls()
    print(f"active backend: {kernels.BACKEND}; comparing: {', '.join(impls)}")
    rng = np.random.default_rng(0)
    header = f"{'case':38s}" + "".join(f"{name:>14s}" for name in impls)
    if len(impls) > 1:
        header += f"{'speedup':>10s}"
    print(header)
    for label, kind, x_shape, w_shape, stride, padding in CASES:
        x = rng.normal(size=x_shape).astype(args.dtype)
        w = rng.normal(size=w_shape).astype(args.dtype)
        b = rng.normal(size=w_shape[0]).astype(args.dtype)
        times = {}
        for name, impl in impls.items():
            times[name] = run_case(impl, kind, x, w, b, stride, padding, args.repeats)
        row = f"{label:38s}" + "".join(f"{times[n] * 1e6:>11.0f} us" for n in impls)
        if "python" in times and "compiled" in times:
            row += f"{times['python'] / times['compiled']:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
