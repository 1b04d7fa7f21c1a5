"""Timing comparison of the jitted kernels against the pure-numpy fallback.

Run with `python3 benchmarks/bench_kernels.py`. Sizes roughly match one
training-step workload on a quarter-resolution crop.
"""

import time

import numpy as np

from crfstereo.kernels import numba_backend, numpy_backend


def timeit(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    rng = np.random.default_rng(0)

    H, W, L = 96, 128, 32
    Cin, Cout = 16, 16
    image = rng.standard_normal((H, W, Cin))
    kernel = rng.standard_normal((Cout, Cin, 3, 3))
    grad_pre = rng.standard_normal((H, W, Cout))
    thin_image = rng.standard_normal((H, W, 1))
    thin_kernel = rng.standard_normal((Cout, 1, 3, 3))
    unary = rng.uniform(-1, 1, (H, W, L))
    lam = rng.uniform(-0.5, 0.5, (H, W, L))
    wh = rng.uniform(0, 2, (H, W))
    wv = rng.uniform(0, 2, (H, W))
    row_costs = np.ascontiguousarray(unary)
    row_weights = np.ascontiguousarray(wh[:, : W - 1])

    cases = [
        ("conv2d 3x3, 1->16 channels",
         lambda impl: impl.conv2d_raw(thin_image, thin_kernel, 1, 1)),
        ("conv2d 3x3, 16->16 channels",
         lambda impl: impl.conv2d_raw(image, kernel, 1, 1)),
        ("conv2d 3x3 kernel grad",
         lambda impl: impl.conv2d_grad_kernel(image, grad_pre, 3, 3, 1, 1)),
        ("chain min-marginals (rows)",
         lambda impl: impl.batch_chain_min_marginals(row_costs, row_weights, 0.3, 1.0)),
        ("chain minima (rows)",
         lambda impl: impl.batch_chain_min(row_costs, row_weights, 0.3, 1.0)),
        ("dual averaging sweep",
         lambda impl: impl.mm_sweep(unary, lam, wh, wv, 0.3, 1.0)),
    ]

    # trigger jit compilation outside the timed region
    for _, fn in cases:
        fn(numba_backend)

    name_w = max(len(name) for name, _ in cases)
    print(f"{'kernel'.ljust(name_w)}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, fn in cases:
        t_np = timeit(lambda: fn(numpy_backend))
        t_nb = timeit(lambda: fn(numba_backend))
        print(f"{name.ljust(name_w)}  {t_np * 1e3:>8.2f}ms  {t_nb * 1e3:>8.2f}ms  "
              f"{t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
