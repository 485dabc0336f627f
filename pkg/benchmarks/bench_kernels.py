"""Compare the numba and pure-numpy block kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Compilation happens once in a warm-up call and is not timed.
"""
import argparse
import timeit

import numpy as np

from tksmooth import kernels


def make_system(rng, N, n):
    sub = rng.standard_normal((N - 1, n, n))
    diag = np.empty((N, n, n))
    for k in range(N):
        M = rng.standard_normal((n, n))
        diag[k] = M @ M.T + (2 * n + 1) * np.eye(n) * 4
    return diag, sub


def make_assembly(rng, N, n, m):
    wq = rng.standard_normal((N, n, n))
    wq = wq @ np.swapaxes(wq, 1, 2)
    wr = rng.standard_normal((N, m, m))
    wr = wr @ np.swapaxes(wr, 1, 2)
    return wq, rng.standard_normal((N - 1, n, n)), rng.standard_normal((N, m, n)), wr


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    rtol = kernels.PIVOT_RTOL

    # warm-up: triggers (or loads cached) compilation
    d, s = make_system(rng, 4, 2)
    lo, ch, _ = kernels.factor_blocks_nb(d, s, rtol)
    kernels.solve_blocks_nb(lo, ch, np.ones((4, 2)))
    kernels.assemble_blocks_nb(*make_assembly(rng, 4, 2, 1))

    print(f"{'kernel':<10}{'N':>7}{'n':>4}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for N in (100, 1000, 10000):
        for n in (2, 4):
            diag, sub = make_system(rng, N, n)
            rhs = rng.standard_normal((N, n))
            lo, ch, _ = kernels.factor_blocks_np(diag, sub, rtol)
            asm = make_assembly(rng, N, n, 2)
            cases = [
                ("factor", lambda: kernels.factor_blocks_nb(diag, sub, rtol),
                 lambda: kernels.factor_blocks_np(diag, sub, rtol)),
                ("solve", lambda: kernels.solve_blocks_nb(lo, ch, rhs),
                 lambda: kernels.solve_blocks_np(lo, ch, rhs)),
                ("assemble", lambda: kernels.assemble_blocks_nb(*asm),
                 lambda: kernels.assemble_blocks_np(*asm)),
            ]
            for name, fast, slow in cases:
                t_nb, t_np = best(fast, args.repeat), best(slow, args.repeat)
                print(f"{name:<10}{N:>7}{n:>4}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
