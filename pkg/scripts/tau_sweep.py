"""Identity-map error against the HDG stabilisation for each polynomial degree.

Usage: python scripts/tau_sweep.py [--n 8] [--taus 0.1 1 3 10]
"""

import argparse

import numpy as np

from otmesh.generators import unit_square_mesh
from otmesh.monge_ampere import MAParams, fixed_point_solve
from otmesh.monitor import AnalyticDensity


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[8, 16])
    p.add_argument("--degrees", type=int, nargs="+", default=[1, 2])
    p.add_argument("--taus", type=float, nargs="+", default=[0.1, 1.0, 3.0, 10.0])
    a = p.parse_args()
    for k in a.degrees:
        for n in a.n:
            m, g = unit_square_mesh(n, k)
            dens = AnalyticDensity(lambda x, y: np.ones_like(x), m, theta=1.0)
            errs = []
            for tau in a.taus:
                sol = fixed_point_solve(m, g, dens, params=MAParams(tau=tau))
                errs.append(f"tau={tau:g}: {np.abs(sol.q - m.coords).max():.2e}")
            print(f"k={k} n={n:3d}  " + "  ".join(errs))


if __name__ == "__main__":
    main()
