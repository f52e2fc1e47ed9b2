#!/usr/bin/env python3
"""Time the numba kernel against the numpy fallback on fitness-sized
formula evaluations.

The hot path of an evolution run is one compiled-program evaluation over
every (sequence, position) window per fitness call, so the batch sizes
below bracket the real workloads (840 comparisons needs ~1700 windows).

Run:  python benchmarks/bench_backends.py
"""

import time

import numpy as np

from txaccel.kernels import (
    available_backends,
    compile_formula,
    evaluate_program,
)
from txaccel.trees import random_formula


def bench(backend, programs, windows, p, repeats):
    # warm up (first numba call compiles)
    evaluate_program(programs[0], windows, p, backend=backend)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for prog in programs:
            evaluate_program(prog, windows, p, backend=backend)
        best = min(best, (time.perf_counter() - t0) / len(programs))
    return best


def main():
    rng = np.random.default_rng(0)
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'windows':>8} {'depth':>6}" +
          "".join(f"{b + ' [us]':>14}" for b in backends) +
          ("  speedup" if len(backends) == 2 else ""))

    for n_windows in (240, 1680, 12_000):
        windows = np.abs(rng.normal(5.0, 2.0, (n_windows, 4)))
        for depth in (2, 4):
            programs = [compile_formula(random_formula(depth, "full", rng))
                        for _ in range(20)]
            times = [bench(b, programs, windows, 0.5, repeats=5)
                     for b in backends]
            row = f"{n_windows:>8} {depth:>6}"
            for t in times:
                row += f"{t * 1e6:>14.1f}"
            if len(times) == 2:
                row += f"  {times[1] / times[0]:>7.1f}x"
            print(row)


if __name__ == "__main__":
    main()
