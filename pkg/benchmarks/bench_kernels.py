#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Times the three hot paths (bilinear warp, block-matching SAD search, 3x3
convolution forward/backward) on training-shaped inputs and reports the
speedup plus the maximum numerical disagreement between the two paths.

Run:  python3 benchmarks/bench_kernels.py [--reps N]
"""

import argparse
import time

import numpy as np

from dynhom import kernels
from dynhom.geometry import PatchFrame, displacement_to_homography, invert


def timeit(fn, reps):
    fn()  # warm up (JIT compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(reps):
        out = fn()
    return (time.perf_counter() - t0) / reps, out


def row(name, t_numba, t_numpy, diff):
    speedup = t_numpy / t_numba
    print(f"{name:<34} {t_numba * 1e3:>9.2f} {t_numpy * 1e3:>9.2f} "
          f"{speedup:>7.2f}x   {diff:.2e}")


def bench_warp(reps):
    rng = np.random.default_rng(0)
    img = rng.random((256, 256))
    h = displacement_to_homography(rng.uniform(-20, 20, 8), PatchFrame(256, 256))
    hinv = invert(h)
    t_nb, out_nb = timeit(lambda: kernels.warp_bilinear_numba(img, hinv, 256, 256), reps)
    t_np, out_np = timeit(lambda: kernels.warp_bilinear_numpy(img, hinv, 256, 256), reps)
    row("warp_bilinear 256x256", t_nb, t_np, np.abs(out_nb - out_np).max())


def bench_block_match(reps):
    rng = np.random.default_rng(1)
    a = rng.random((256, 256))
    b = np.roll(a, (3, -2), axis=(0, 1))
    t_nb, out_nb = timeit(lambda: kernels.block_match_grid_numba(a, b, 16, 8), reps)
    t_np, out_np = timeit(lambda: kernels.block_match_grid_numpy(a, b, 16, 8), reps)
    diff = max(np.abs(out_nb[0] - out_np[0]).max(), np.abs(out_nb[1] - out_np[1]).max())
    row("block_match 256x256 b16 r8", t_nb, t_np, diff)


def bench_conv(reps, dtype, label):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((8, 16, 64, 64)).astype(dtype)
    xpad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    w = rng.standard_normal((16, 16, 3, 3)).astype(dtype)
    b = rng.standard_normal(16).astype(dtype)
    g = rng.standard_normal((8, 16, 64, 64)).astype(dtype)

    t_nb, o_nb = timeit(lambda: kernels.conv3x3_fwd_numba(xpad, w, b), reps)
    t_np, o_np = timeit(lambda: kernels.conv3x3_fwd_numpy(xpad, w, b), reps)
    row(f"conv3x3 fwd B8 C16 64px {label}", t_nb, t_np, np.abs(o_nb - o_np).max())

    t_nb, o_nb = timeit(lambda: kernels.conv3x3_bwd_input_numba(g, w), reps)
    t_np, o_np = timeit(lambda: kernels.conv3x3_bwd_input_numpy(g, w), reps)
    row(f"conv3x3 bwd-input {label}", t_nb, t_np, np.abs(o_nb - o_np).max())

    t_nb, o_nb = timeit(lambda: kernels.conv3x3_bwd_weight_numba(g, xpad), reps)
    t_np, o_np = timeit(lambda: kernels.conv3x3_bwd_weight_numpy(g, xpad), reps)
    row(f"conv3x3 bwd-weight {label}", t_nb, t_np, np.abs(o_nb - o_np).max())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args()
    print(f"dispatch in use: {'numba' if kernels.USING_NUMBA else 'numpy'} "
          f"(set DYNHOM_NO_NUMBA=1 to force numpy)\n")
    print(f"{'kernel':<34} {'numba ms':>9} {'numpy ms':>9} {'speedup':>8}   max|diff|")
    print("-" * 78)
    bench_warp(args.reps)
    bench_block_match(args.reps)
    bench_conv(args.reps, np.float32, "f32")
    bench_conv(args.reps, np.float64, "f64")


if __name__ == "__main__":
    main()
