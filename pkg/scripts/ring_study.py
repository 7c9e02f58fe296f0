"""Equidistribution of the Gaussian-ring density as the ring width and mesh size vary.

Usage: python scripts/ring_study.py [--k 2] [--n 20] [--widths 0.1 0.15 0.2] [--vtk out_dir]
"""

import argparse
from pathlib import Path

import numpy as np

from otmesh import io
from otmesh.generators import unit_square_mesh
from otmesh.monge_ampere import (
    corner_fix,
    equidistribution_deviation,
    extract_adapted_mesh,
    fixed_point_solve,
    mapped_cell_mass,
)
from otmesh.monitor import AnalyticDensity
from otmesh.presets import gaussian_ring_density


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--n", type=int, nargs="+", default=[20])
    p.add_argument("--widths", type=float, nargs="+", default=[0.1, 0.15, 0.2])
    p.add_argument("--radius", type=float, default=0.25)
    p.add_argument("--vtk", type=Path, default=None, help="write adapted meshes here")
    a = p.parse_args()
    print(f"{'n':>4} {'width':>6} {'its':>4} {'deviation':>10} {'min det H':>10} {'worst cell':>11}")
    for n in a.n:
        m, g = unit_square_mesh(n, a.k)
        bnd = np.zeros(m.n_elements, dtype=bool)
        bnd[m.boundary_faces[:, 0]] = True
        for w in a.widths:
            dens = AnalyticDensity(gaussian_ring_density(radius=a.radius, width=w), m)
            sol = fixed_point_solve(m, g, dens)
            dev = equidistribution_deviation(sol, dens)
            # is the worst cell on the boundary or inside?
            rel = np.abs(mapped_cell_mass(sol, dens) / (dens.theta * m.element_areas) - 1.0)
            share = "boundary" if bnd[np.argmax(rel)] else "interior"
            print(f"{n:4d} {w:6.2f} {sol.iterations:4d} {dev:10.2%} {sol.diagnostics['min_det_H']:10.3f} {share:>11}")
            if a.vtk is not None:
                a.vtk.mkdir(parents=True, exist_ok=True)
                adapted = corner_fix(extract_adapted_mesh(m, sol, g), g)
                io.write_vtk(adapted, a.vtk / f"ring_n{n}_w{w:g}.vtk")


if __name__ == "__main__":
    main()
