#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Both variants are imported directly (ignoring the ADP2_NO_NUMBA dispatch) so a
single process times the identical workload on each path.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--size PX]
"""
import argparse
import time

import numpy as np

from hirex import _kernels
from hirex.edges import SOBEL_X, gaussian_kernel


def timeit(fn, *args, repeats=5):
    fn(*args)  # warm (jit compile / cache touch)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--size", type=int, default=512)
    args = parser.parse_args()

    if not _kernels.HAS_NUMBA:
        print("numba unavailable: only the numpy path can run")
        return

    rng = np.random.default_rng(0)
    n = args.size
    img = rng.random((n, n))
    grid = (img > 0.5).astype(np.uint8)
    mag = rng.random((n, n)) * 300
    dirs = rng.integers(0, 4, size=(n, n)).astype(np.uint8)
    strong = (mag > 250).astype(np.uint8)
    weak = mag > 150
    gauss = gaussian_kernel(1.0)

    cases = [
        ("bicubic %dx%d -> 2x" % (n, n), (_kernels._np_bicubic, _kernels._nb_bicubic), (img, 2 * n, 2 * n)),
        ("conv2 gaussian 7x7", (_kernels._np_conv2_replicate, _kernels._nb_conv2_replicate), (img, gauss)),
        ("conv2 sobel 3x3", (_kernels._np_conv2_replicate, _kernels._nb_conv2_replicate), (img, SOBEL_X)),
        ("erode r=1", (_kernels._np_erode, _kernels._nb_erode), (grid, 1)),
        ("dilate r=2", (_kernels._np_dilate, _kernels._nb_dilate), (grid, 2)),
        ("nms", (_kernels._np_nms, _kernels._nb_nms), (mag, dirs)),
        (
            "hysteresis",
            (
                lambda s, w: _kernels._np_hysteresis(s, w.astype(bool)),
                lambda s, w: _kernels._nb_hysteresis(s, w),
            ),
            (strong, weak.astype(np.uint8)),
        ),
    ]

    print(f"{'kernel':<28}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>9}")
    for name, (np_fn, nb_fn), fn_args in cases:
        t_np = timeit(np_fn, *fn_args, repeats=args.repeats) * 1e3
        t_nb = timeit(nb_fn, *fn_args, repeats=args.repeats) * 1e3
        print(f"{name:<28}{t_np:>12.2f}{t_nb:>12.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
