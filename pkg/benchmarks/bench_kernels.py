"""Timing comparison of the compiled and numpy stepping kernels.

Runs the vanishing-viscosity workload shape (fine mesh, quadratic flux,
linear diffusion) through both backends and reports the speedup.

Usage: python benchmarks/bench_kernels.py [n_cells] [n_steps]
"""

import sys
import time

import numpy as np

from slicelab._core import _kernels_py

try:
    from slicelab._core import _kernels as compiled
except ImportError:
    compiled = None


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 2048
    steps = int(sys.argv[2]) if len(sys.argv) > 2 else 2000
    rng = np.random.default_rng(0)
    u0 = np.clip(rng.normal(0.0, 0.02, n), -0.08, 0.08)
    px = (0.0, 0.0, 0.5)
    breaks, seg_sign, seg_offset = _kernels_py.abs_derivative_tables(px)
    dx = 1.0 / n
    dt = 0.4 * dx * dx / (2.0 * 1e-3)
    args = (steps, dt, dx, np.asarray(px), breaks, seg_sign, seg_offset, 1e-3, 0.1)

    t0 = time.perf_counter()
    out_py, _ = _kernels_py.run_flat_poly_block(u0, *args)
    t_py = time.perf_counter() - t0
    print(f"numpy backend:    {t_py:8.3f} s  ({n} cells x {steps} steps)")

    if compiled is None:
        print("compiled backend: not built")
        return
    t0 = time.perf_counter()
    out_c, _ = compiled.run_flat_poly_block(u0, *args)
    t_c = time.perf_counter() - t0
    print(f"compiled backend: {t_c:8.3f} s  ({n} cells x {steps} steps)")
    print(f"speedup:          {t_py / t_c:8.2f}x")
    print(f"bitwise equal:    {np.array_equal(out_py, out_c)}")


if __name__ == "__main__":
    main()
