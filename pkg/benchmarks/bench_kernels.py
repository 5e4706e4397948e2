"""Time the compiled and NumPy primal-dual kernels on representative lattices.

Usage: python benchmarks/bench_kernels.py [--iters N] [--repeat R]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fdr import _backend
from fdr.simulate import Scenario, four_step_scenario, generate, scenario_grid
from fdr.grid import bin_points
from fdr.solver import DualState, _setup, SolverConfig

CASES = {
    "1d N=250 S=32": (four_step_scenario(seed=0), 250),
    "2d N=30x30 S=32": (Scenario(dim=2, cohens_d=0.75, n=3600), 30),
    "3d N=8^3 S=32": (Scenario(dim=3, cohens_d=0.5, n=2048), 8),
}


def time_kernel(kernel, prob, grid, iters, repeat):
    best = np.inf
    for _ in range(repeat):
        st = DualState.initial(grid.n_spatial, grid.s_levels, grid.d)
        t0 = time.perf_counter()
        kernel.pd_steps(st.v, st.v_bar, st.p, st.s, st.mu, st.mu_bar,
                        prob.alpha, prob.offset, prob.sigx, prob.kappa, prob.taumu,
                        prob.scales, prob.strides, prob.dims,
                        prob.tau, prob.sigt, prob.sigs, prob.radius, iters)
        best = min(best, time.perf_counter() - t0)
    return best / iters


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = sorted(_backend.BACKENDS)
    print(f"{'case':<18}" + "".join(f"{n + ' ms/it':>16}" for n in names) + f"{'speedup':>10}")
    for label, (sc, cells) in CASES.items():
        cloud = generate(sc)
        grid = scenario_grid(sc, cloud, cells)
        prob = _setup(bin_points(cloud, grid), grid, SolverConfig(50.0, 0.002))
        times = {n: time_kernel(_backend.get(n), prob, grid, args.iters, args.repeat) for n in names}
        ratio = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<18}" + "".join(f"{1e3 * times[n]:>16.2f}" for n in names) + f"{ratio:>9.1f}x")


if __name__ == "__main__":
    main()
