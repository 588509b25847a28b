"""Benchmark the hot kernels: numba jit vs pure numpy.

Times forward and backward of the causal convolution and the patch
gather-reduce at several problem sizes, on both backends, and prints a
comparison table. Run directly:

    python benchmarks/kernel_bench.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from igloo import set_backend
from igloo.backend import HAS_NUMBA
from igloo.kernels import (
    causal_conv1d,
    causal_conv1d_backward,
    patch_reduce,
    patch_reduce_backward,
)

CASES = [
    # (batch, length, in_ch, out_ch, width, n_patches, patch_size)
    (32, 50, 10, 5, 3, 100, 4),
    (100, 200, 2, 5, 3, 500, 4),
    (1, 20000, 2, 5, 3, 1000, 4),
    (16, 784, 8, 8, 3, 300, 4),
]


def time_fn(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(batch, length, n_in, n_out, width, n_patches, patch_size, repeat):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(batch, length, n_in))
    kernel = rng.normal(size=(width, n_in, n_out))
    kbias = rng.normal(size=n_out)
    f = causal_conv1d(x, kernel, kbias)
    idx = rng.integers(0, length, size=(1, n_patches, patch_size))
    w = rng.normal(size=(patch_size, n_out, n_patches))
    wbias = rng.normal(size=n_patches)
    dy_conv = rng.normal(size=f.shape)
    dy_patch = rng.normal(size=(batch, 1, n_patches))

    def step():
        fm = causal_conv1d(x, kernel, kbias)
        patch_reduce(fm, idx, w, wbias)
        causal_conv1d_backward(x, kernel, dy_conv)
        patch_reduce_backward(fm, idx, w, dy_patch)

    step()  # warm up (jit compilation on the numba backend)
    return time_fn(step, repeat)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions per case (best is kept)")
    args = parser.parse_args()

    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    results = {}
    for backend in backends:
        set_backend(backend)
        for case in CASES:
            results[(backend, case)] = bench_case(*case, repeat=args.repeat)

    header = f"{'case (B,L,M,K,w,J,p)':<32}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for case in CASES:
        label = str(case)
        row = f"{label:<32}"
        for backend in backends:
            row += f"{results[(backend, case)] * 1e3:>10.2f}ms"
        if len(backends) == 2:
            ratio = results[("numpy", case)] / results[("numba", case)]
            row += f"{ratio:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
