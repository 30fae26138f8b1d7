"""Numba vs numpy timings for the two hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The numba timings exclude the first (compiling) call.  Both paths are
checked for agreement before timing.
"""
import argparse
import time

import numpy as np

from polarion import _kernels
from polarion.constants import HBAR_C
from polarion.driven import TwoModeModel, hamiltonian


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def stack_case(n_layers=25, n_omega=4000):
    rng = np.random.default_rng(0)
    thick = rng.uniform(50, 150, n_layers)
    eps = rng.uniform(2, 6, n_layers).astype(complex)
    a2 = np.where(np.arange(n_layers) % 5 == 0, 3e4, 0.0)
    w0 = np.full(n_layers, 1500.0)
    gx = np.full(n_layers, 0.5)
    omegas = np.linspace(1400, 1600, n_omega) - 1j * np.linspace(0.01, 5, n_omega)
    return omegas, HBAR_C, thick, eps, a2, w0, gx


def lindblad_case(n_max):
    m = TwoModeModel(0.0, 0.047, 0.0095, 0.171, 0.171, 0.0188, 1e-3, n_max=n_max)
    h, (al, ar) = hamiltonian(m)
    return h, [al, ar], [m.gamma, m.gamma]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        print("numba is not importable; only the numpy path can run")
        return

    case = stack_case()
    ref = _kernels.stack_matrices_numpy(*case)
    assert np.allclose(_kernels.stack_matrices_numba(*case), ref, rtol=1e-12, atol=1e-12)
    t_np = best_of(lambda: _kernels.stack_matrices_numpy(*case), args.repeat)
    t_nb = best_of(lambda: _kernels.stack_matrices_numba(*case), args.repeat)
    print(f"stack_matrices  {len(case[0])} freqs x {len(case[2])} layers: numpy {t_np * 1e3:8.2f} ms  numba {t_nb * 1e3:8.2f} ms  speedup {t_np / t_nb:5.1f}x")

    for n_max in (6, 8, 10):
        h, jumps, rates = lindblad_case(n_max)
        a = _kernels.lindblad_superoperator_numba(h, jumps, rates)
        b = _kernels.lindblad_superoperator_numpy(h, jumps, rates)
        assert abs(a - b).max() < 1e-13
        t_np = best_of(lambda: _kernels.lindblad_superoperator_numpy(h, jumps, rates), args.repeat)
        t_nb = best_of(lambda: _kernels.lindblad_superoperator_numba(h, jumps, rates), args.repeat)
        print(f"lindblad        n_max={n_max:2d} ({a.shape[0]:6d} rows):           numpy {t_np * 1e3:8.2f} ms  numba {t_nb * 1e3:8.2f} ms  speedup {t_np / t_nb:5.1f}x")


if __name__ == "__main__":
    main()
