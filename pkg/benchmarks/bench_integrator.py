#!/usr/bin/env python3
"""Benchmark the compiled amplitude integrator against the numpy fallback.

The fixed-step integrator is the one hot loop in the package where a
compiled kernel beats vectorized numpy: each step touches short arrays,
so Python dispatch overhead dominates the fallback.

Usage: python benchmarks/bench_integrator.py [n_freq] [n_steps]
"""

import math
import sys
import time

import numpy as np

from foxli.decay import synthetic_flat_comb
from foxli.integrate import BACKEND, evolve_rk4


def run(backend, comb, dt, n_steps, save_every, repeats=3):
    best = math.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = evolve_rk4(comb.g_absorb, comb.g_emit, comb.detunings(),
                         dt, n_steps, save_every, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    n_freq = int(sys.argv[1]) if len(sys.argv) > 1 else 201
    n_steps = int(sys.argv[2]) if len(sys.argv) > 2 else 40000
    comb = synthetic_flat_comb(2.5, n_freq=n_freq, delta_omega=1.0,
                               g0=math.sqrt(0.25 / (4 * math.pi)))
    dt = 1.0e-4
    save_every = max(1, n_steps // 400)
    n_steps = save_every * (n_steps // save_every)

    print(f"modes: {comb.n_modes}, steps: {n_steps}, active backend: {BACKEND}")
    t_py, out_py = run("python", comb, dt, n_steps, save_every)
    print(f"numpy fallback : {t_py:8.3f} s  "
          f"({n_steps / t_py / 1e3:.1f} ksteps/s)")
    if BACKEND == "compiled":
        t_c, out_c = run("compiled", comb, dt, n_steps, save_every)
        print(f"compiled kernel: {t_c:8.3f} s  "
              f"({n_steps / t_c / 1e3:.1f} ksteps/s)  speedup x{t_py / t_c:.1f}")
        dev = max(np.max(np.abs(a - b)) for a, b in zip(out_py, out_c))
        print(f"max |numpy - compiled| over saved amplitudes: {dev:.3e}")
    else:
        print("compiled kernel not built (install with Cython to compare)")


if __name__ == "__main__":
    main()
