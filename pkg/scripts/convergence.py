"""Convergence tables for the manufactured Monge-Ampere map and the Helmholtz smoother.

Usage: python scripts/convergence.py [--degrees 1 2 3] [--meshes 8 16 32]
"""

import argparse

import numpy as np

from otmesh import helmholtz
from otmesh.generators import unit_square_mesh
from otmesh.monge_ampere import fixed_point_solve
from otmesh.monitor import AnalyticDensity
from otmesh.presets import PerturbedQuadratic


def ma_error(n, k, eps):
    pq = PerturbedQuadratic(eps)
    m, g = unit_square_mesh(n, k)
    sol = fixed_point_solve(m, g, AnalyticDensity(pq.density, m, theta=1.0))
    gq = m.volume_geometry
    qq = np.einsum("qi,eid->eqd", m.master.basis_at_quad, sol.q)
    ex = pq.grad(gq.points[..., 0], gq.points[..., 1])
    return np.sqrt(np.sum(np.sum((qq - ex) ** 2, -1) * gq.wdet)), sol.iterations, sol.diagnostics["ma_residual"]


def helmholtz_error(n, k, kappa=0.01):
    m, _ = unit_square_mesh(n, k)
    exact = lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y)  # noqa: E731
    w = helmholtz.solve(helmholtz.HelmholtzProblem(m, kappa, lambda x, y: exact(x, y) * (1 + 2 * kappa * np.pi**2)))
    g = m.volume_geometry
    return np.sqrt(np.sum((w.at_quad() - exact(g.points[..., 0], g.points[..., 1])) ** 2 * g.wdet))


def table(title, rows):
    print(title)
    prev = None
    for n, err, *rest in rows:
        rate = "" if prev is None else f"{np.log2(prev / err):6.2f}"
        print(f"  n={n:3d}  error={err:.3e}  rate={rate:>6}  " + "  ".join(str(r) for r in rest))
        prev = err


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--degrees", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--meshes", type=int, nargs="+", default=[8, 16, 32])
    p.add_argument("--eps", type=float, default=0.05)
    a = p.parse_args()
    for k in a.degrees:
        rows = []
        for n in a.meshes:
            err, its, res = ma_error(n, k, a.eps)
            rows.append((n, err, f"its={its}", f"MA residual={res:.2e}"))
        table(f"Monge-Ampere map, k={k}, eps={a.eps}", rows)
        table(f"Helmholtz, k={k}", [(n, helmholtz_error(n, k)) for n in a.meshes])


if __name__ == "__main__":
    main()
