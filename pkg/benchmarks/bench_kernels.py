"""Compiled RK4 core versus the numpy fallback.

Times one output interval (0.5 μs at Ω/2π = 2.245 MHz) for several Fock
truncations, checks the two backends agree, and prints ms per RK4 substep.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from iontrap_nm._backend import compiled_rk4_advance, python_rk4_advance
from iontrap_nm.dynamics import InitialCondition, kernel_args, substeps
from iontrap_nm.hilbert import ModelParams, ModeSpec

CASES = [(15,), (30,), (6, 6), (8, 8), (10, 10), (15, 15)]


def params_for(dims):
    freqs = (2.32, 3.16)
    etas = (0.069, 0.072)
    modes = tuple(ModeSpec(freqs[i], etas[i], d) for i, d in enumerate(dims))
    return ModelParams(rabi_mhz=2.245, modes=modes, gamma_plus_mhz=0.0049, gamma_minus_mhz=0.0008)


def time_backend(fn, rho, ka, gamma, h, n, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(rho, ka.diag_e, ka.diag_g, ka.factors, ka.factors_dag, ka.product, ka.amp,
                 ka.drive_rate, gamma, 0.0, h, n)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if compiled_rk4_advance is None:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")
    print(f"{'fock dims':>10} {'n':>5} {'steps':>6} {'numpy ms/step':>14} {'cython ms/step':>15} {'speedup':>8} {'max |diff|':>11}")
    for dims in CASES:
        p = params_for(dims)
        ka = kernel_args(p)
        rho = InitialCondition("plus_x").density(p)
        n = substeps(p, 0.5)
        h = 0.5 / n
        tp, rp = time_backend(python_rk4_advance, rho, ka, p.gamma_plus, h, n, args.repeat)
        tc, rc = time_backend(compiled_rk4_advance, rho, ka, p.gamma_plus, h, n, args.repeat)
        diff = float(np.max(np.abs(rp - rc)))
        print(f"{str(dims):>10} {rho.shape[0]:>5} {n:>6} {1e3 * tp / n:>14.3f} {1e3 * tc / n:>15.3f} "
              f"{tp / tc:>8.2f} {diff:>11.2e}")


if __name__ == "__main__":
    main()
