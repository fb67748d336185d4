#!/usr/bin/env python3
"""Benchmark the compiled event kernel against its pure-Python twin.

Runs the same workloads on both backends, checks the traces are
bit-identical, and prints a timing table with the speedup.

    python benchmarks/bench_backends.py [--events N]
"""

import argparse
import time

import numpy as np

from aimdalloc import ExponentialCost, QuadraticCost, SystemConfig, run_simulation
from aimdalloc.backends import HAVE_COMPILED


def workload(name, n, m, T, kind, seed):
    cfg = SystemConfig(
        n=n,
        m=m,
        capacity=np.linspace(1.0, 2.0, m),
        alpha=np.linspace(0.1, 0.2, m),
        beta=np.linspace(0.6, 0.85, m),
        window=T,
        lambda_min=0.1,
        lambda_max=0.95,
        seed=seed,
    )
    rng = np.random.default_rng(seed)
    if kind == "quadratic":
        costs = [QuadraticCost(0.5 + rng.random(m), 0.05 + rng.random(m)) for _ in range(n)]
    else:
        costs = [ExponentialCost(0.3 + rng.random(m), 0.2 + rng.random(m)) for _ in range(n)]
    return name, cfg, costs


def run_case(cfg, costs, events, backend, repeats=3):
    best = np.inf
    trace = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        trace = run_simulation(cfg, costs, events, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, trace


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--events", type=int, default=100_000)
    args = parser.parse_args()

    cases = [
        workload("n=2 m=2 T=4 quadratic", 2, 2, 4, "quadratic", 1),
        workload("n=8 m=2 T=4 quadratic", 8, 2, 4, "quadratic", 2),
        workload("n=4 m=3 T=8 exponential", 4, 3, 8, "exponential", 3),
    ]

    print(f"events per run: {args.events}")
    header = f"{'workload':<28} {'python':>10} {'compiled':>10} {'speedup':>8}  identical"
    print(header)
    print("-" * len(header))
    for name, cfg, costs in cases:
        t_py, tr_py = run_case(cfg, costs, args.events, "python", repeats=1)
        if HAVE_COMPILED:
            t_c, tr_c = run_case(cfg, costs, args.events, "compiled")
            same = (
                np.array_equal(tr_py.pre, tr_c.pre)
                and np.array_equal(tr_py.backoff, tr_c.backoff)
                and np.array_equal(tr_py.times, tr_c.times)
            )
            print(f"{name:<28} {t_py:>9.3f}s {t_c:>9.3f}s {t_py / t_c:>7.1f}x  {same}")
            if not same:
                raise SystemExit("backend outputs diverged")
        else:
            print(f"{name:<28} {t_py:>9.3f}s {'n/a':>10} {'n/a':>8}  n/a")
    if not HAVE_COMPILED:
        print("compiled kernel not available; install with Cython and a C compiler")


if __name__ == "__main__":
    main()
