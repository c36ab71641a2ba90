"""Grid convergence tables: Neumann Poisson cosine benchmark and the
SKT solver on a doubling ladder.

    python3 scripts/convergence_study.py [--levels 5]
"""
import argparse

import numpy as np

from crossdiff.coefficients import preset_skt
from crossdiff.experiments import ExperimentSpec, Problem, run_experiment
from crossdiff.fields import Grid1D, solve_poisson
from crossdiff.solver import SchemeConfig


def poisson_table(levels):
    print("Poisson, -phi'' = pi^2 cos(pi x)")
    print(f"{'N':>6} {'max error':>12} {'ratio':>8}")
    prev = None
    for k in range(levels):
        grid = Grid1D(16 * 2**k)
        x = grid.centers
        err = np.max(np.abs(solve_poisson(grid, np.pi**2 * np.cos(np.pi * x)).phi - np.cos(np.pi * x)))
        ratio = f"{prev / err:8.4f}" if prev else " " * 8
        print(f"{grid.N:>6} {err:12.4e} {ratio}")
        prev = err


def solver_table(levels):
    def initial(grid):
        x = grid.centers / grid.length
        return np.array([0.5 + 0.2 * np.cos(np.pi * x), 0.4 - 0.1 * np.cos(2 * np.pi * x)])

    problem = Problem(preset_skt(1.0, [1.0, 1.0], L=3.0), Grid1D(16),
                      SchemeConfig(auto_cfl=True, t_end=0.01), initial,
                      lambda grid, u0: np.full(grid.N, u0.mean()))
    ladder = tuple(16 * 2**k for k in range(levels))
    rep = run_experiment(ExperimentSpec("refinement", problem, ladder=ladder))
    s = rep.series
    print("\nSKT solver, successive differences at t = 0.01")
    print(f"{'N':>6} {'diff dx':>12} {'dt':>12} {'diff dt':>12} {'agg residual':>13}")
    for k, N in enumerate(s["cells"]):
        dx = f"{s['diff_dx'][k]:12.4e}" if k < len(s["diff_dx"]) else " " * 12
        dt = f"{s['diff_dt'][k]:12.4e}" if k < len(s["diff_dt"]) else " " * 12
        print(f"{N:>6} {dx} {s['dt'][k]:12.4e} {dt} {s['agg_residual'][k]:13.2e}")
    print(f"orders dx: {rep.constants['orders_dx']}")
    print(f"orders dt: {rep.constants['orders_dt']}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=4)
    args = ap.parse_args()
    poisson_table(args.levels + 1)
    solver_table(args.levels)
