"""Timing comparison of the compiled and fallback stencil kernels.

Runs the full residual-side kernel chain (Hermitian entries, determinant
and minimum eigenvalue, linearized stencil weights) on representative
grids and prints per-pass times plus the speedup.  Also re-checks that
both backends return identical bits on the benchmark inputs.

Usage: python benchmarks/bench_kernels.py [repeats]
"""
import sys
import time

import numpy as np

from cmalab.kernels import fallback

try:
    from cmalab.kernels import _core
except ImportError:
    print("compiled kernels not built; nothing to compare")
    sys.exit(0)


def make_field(n, m, seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(-1.0, 1.0, m)
    grids = np.meshgrid(*([x] * (2 * n)), indexing="ij")
    vals = 0.5 * sum(g**2 for g in grids)
    vals = vals + 0.01 * rng.standard_normal(vals.shape)
    spacing = np.full(2 * n, x[1] - x[0])
    return vals, spacing


def one_pass(mod, vals, spacing, n):
    entries = mod.hermitian_entries(vals, spacing, n)
    det, mineig = mod.det_and_min_eig(entries, n)
    diag, pairs, mixed = mod.linearized_stencil_weights(entries, n)
    return entries, det, mineig, diag, mixed


def check_parity(vals, spacing, n):
    a = one_pass(fallback, vals, spacing, n)
    b = one_pass(_core, vals, spacing, n)
    for x, y in zip(a, b):
        if not np.array_equal(x, y):
            return False
    return True


def bench(mod, vals, spacing, n, repeats):
    one_pass(mod, vals, spacing, n)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        one_pass(mod, vals, spacing, n)
    return (time.perf_counter() - t0) / repeats


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 30
    cases = [(1, 65), (1, 257), (2, 13), (2, 17), (2, 21)]
    print(f"{'grid':>10} {'fallback':>12} {'compiled':>12} {'speedup':>9}  bits")
    for n, m in cases:
        vals, spacing = make_field(n, m, seed=n * 1000 + m)
        same = check_parity(vals, spacing, n)
        tf = bench(fallback, vals, spacing, n, repeats)
        tc = bench(_core, vals, spacing, n, repeats)
        label = f"n={n} {m}^{2 * n}"
        print(
            f"{label:>10} {tf * 1e3:>10.3f}ms {tc * 1e3:>10.3f}ms "
            f"{tf / tc:>8.2f}x  {'equal' if same else 'DIFFER'}"
        )


if __name__ == "__main__":
    main()
