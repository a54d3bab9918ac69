"""Time the numba kernels against the pure-numpy fallback.

Usage:  python benchmarks/kernel_benchmark.py [--paths 40000] [--solves 2000]

Runs both implementations of the tridiagonal solve and the exit-time
path simulation on identical inputs, reports wall times, speedups, and
the maximum result deviation.  Works regardless of EXITFLOW_PURE_NUMPY;
it calls the private implementations directly.
"""

import argparse
import time

import numpy as np

from exitflow import kernels, lq_benchmark, solve_regularized_hjb
from exitflow.montecarlo import _extended_tables


def time_fn(fn, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_thomas(n, n_solves):
    rng = np.random.default_rng(0)
    lower = rng.uniform(0.1, 1.0, n)
    upper = rng.uniform(0.1, 1.0, n)
    diag = -(lower + upper + 1.0)
    rhs = rng.standard_normal((n_solves, n))

    def run(fn):
        acc = np.zeros(n)
        for k in range(n_solves):
            acc += fn(lower, diag, upper, rhs[k])
        return acc

    kernels._thomas_numba(lower, diag, upper, rhs[0])  # compile
    t_nb, out_nb = time_fn(lambda: run(kernels._thomas_numba))
    t_np, out_np = time_fn(lambda: run(kernels._thomas_numpy))
    dev = float(np.max(np.abs(out_nb - out_np)))
    return t_nb, t_np, dev


def bench_simulation(n_paths, chunk):
    lq = lq_benchmark("discrete", n_interior=49)
    sol = solve_regularized_hjb(lq, 0.5)
    b_tab, c_tab, fkl_tab, s_tab = _extended_tables(lq, sol.optimal_policy,
                                                    0.5)
    rng = np.random.default_rng(1)
    normals = rng.standard_normal((n_paths, chunk))
    dt = 1e-4
    args = (0.0, 1.0, lq.grid.spacing, b_tab, c_tab, fkl_tab, s_tab,
            dt, np.sqrt(dt), lq.g_left, lq.g_right)

    def state():
        return (np.full(n_paths, 0.5), np.ones(n_paths), np.zeros(n_paths),
                np.zeros(n_paths, dtype=np.int64),
                np.zeros(n_paths, dtype=bool),
                np.zeros(n_paths, dtype=np.int64))

    warm = state()
    kernels._sim_chunk_numba(*warm, normals[:64], *args)  # compile

    def run(fn):
        st = state()
        fn(*st, normals, *args)
        return st[2]  # accumulated cost

    t_nb, cost_nb = time_fn(lambda: run(kernels._sim_chunk_numba))
    t_np, cost_np = time_fn(lambda: run(kernels._sim_chunk_numpy))
    dev = float(np.max(np.abs(cost_nb - cost_np)))
    return t_nb, t_np, dev


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=40_000)
    parser.add_argument("--chunk", type=int, default=512)
    parser.add_argument("--solves", type=int, default=2_000)
    parser.add_argument("--n", type=int, default=199)
    args = parser.parse_args()

    if not kernels.USE_NUMBA:
        print("note: numba backend is disabled in this process; the jitted "
              "variants are compiled here regardless")

    print(f"{'kernel':<28}{'numba':>10}{'numpy':>10}{'speedup':>9}"
          f"{'max |diff|':>12}")
    t_nb, t_np, dev = bench_thomas(args.n, args.solves)
    print(f"{'thomas n=%d x%d' % (args.n, args.solves):<28}"
          f"{t_nb:>9.4f}s{t_np:>9.4f}s{t_np / t_nb:>8.1f}x{dev:>12.2e}")
    t_nb, t_np, dev = bench_simulation(args.paths, args.chunk)
    print(f"{'exit paths %dx%d' % (args.paths, args.chunk):<28}"
          f"{t_nb:>9.4f}s{t_np:>9.4f}s{t_np / t_nb:>8.1f}x{dev:>12.2e}")


if __name__ == "__main__":
    main()
