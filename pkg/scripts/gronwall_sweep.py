"""Fitted H^-1 growth rate of aggregate differences for ion transport as
the valence z varies (the structural constant is M = z^2 / D).

    python3 scripts/gronwall_sweep.py [--D 1.0] [--z 0 0.5 1 2 4]
"""
import argparse

import numpy as np

from crossdiff.coefficients import check_conditions, preset_ion_transport
from crossdiff.experiments import ExperimentSpec, Problem, run_experiment
from crossdiff.fields import Grid1D
from crossdiff.solver import SchemeConfig


def initial(grid):
    x = grid.centers / grid.length
    return np.array([0.3 + 0.1 * np.cos(np.pi * x), 0.25 - 0.08 * np.cos(2 * np.pi * x)])


def background(grid, u0):
    return np.mean(u0) + 0.05 * np.cos(np.pi * grid.centers / grid.length)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--D", type=float, default=1.0)
    ap.add_argument("--z", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0, 4.0])
    ap.add_argument("--cells", type=int, default=64)
    ap.add_argument("--t-end", type=float, default=0.05)
    ap.add_argument("--delta", type=float, default=0.1)
    args = ap.parse_args()
    print(f"{'z':>6} {'M':>8} {'C_hat':>10} {'C_lsq':>10} {'max|grad phi|':>14}")
    for z in args.z:
        model = preset_ion_transport(args.D, z, 2)
        p = Problem(model, Grid1D(args.cells),
                    SchemeConfig(auto_cfl=True, t_end=args.t_end, drift_flux="upwind"),
                    initial, background)
        rep = run_experiment(ExperimentSpec("gronwall", p, delta=args.delta, seed=1))
        c = rep.constants
        print(f"{z:6.2f} {check_conditions(model).sup_ratio:8.3f} {c['C_hat']:10.3f} "
              f"{c['C_lsq']:10.3f} {c['max_grad_phi']:14.4e}")
