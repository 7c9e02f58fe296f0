"""Continuous Galerkin solver for ``w - div(kappa grad w) = b``."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import ScalarFieldDG
from .mesh import Mesh

log = logging.getLogger(__name__)

NEUMANN0 = "neumann0"
DIRICHLET0 = "dirichlet0"


class SolverFailure(RuntimeError):
    pass


@dataclass
class HelmholtzProblem:
    """Screened Poisson problem on ``mesh``.

    ``source`` is a :class:`ScalarFieldDG` on the same mesh or a callable
    ``b(x, y)``.  ``bc`` maps boundary segment tags to ``"neumann0"`` or
    ``"dirichlet0"``; unlisted tags are homogeneous Neumann.
    """

    mesh: Mesh
    kappa: float
    source: object
    bc: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        for tag, kind in self.bc.items():
            if kind not in (NEUMANN0, DIRICHLET0):
                raise ValueError(f"unknown boundary condition {kind!r} for segment {tag}")


def assemble(mesh: Mesh, kappa: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Global stiffness (scaled by kappa) and mass matrices on the continuous space."""
    g = mesh.volume_geometry
    phi = mesh.master.basis_at_quad
    ke = kappa * np.einsum("eq,eqdi,eqdj->eij", g.wdet, g.grad_basis, g.grad_basis)
    me = np.einsum("eq,qi,qj->eij", g.wdet, phi, phi)
    ids = mesh.node_ids
    rows = np.repeat(ids[:, :, None], ids.shape[1], axis=2).ravel()
    cols = np.repeat(ids[:, None, :], ids.shape[1], axis=1).ravel()
    n = mesh.n_global_nodes
    stiff = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mass = sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return stiff, mass


def load_vector(mesh: Mesh, source) -> np.ndarray:
    g = mesh.volume_geometry
    if isinstance(source, ScalarFieldDG):
        bq = source.at_quad()
    elif callable(source):
        bq = np.asarray(source(g.points[..., 0], g.points[..., 1]), dtype=float) * np.ones(g.det.shape)
    else:
        bq = np.full(g.det.shape, float(source))
    fe = np.einsum("eq,eq,qi->ei", g.wdet, bq, mesh.master.basis_at_quad)
    return np.bincount(mesh.node_ids.ravel(), weights=fe.ravel(), minlength=mesh.n_global_nodes)


def dirichlet_nodes(mesh: Mesh, bc: dict) -> np.ndarray:
    tags = {t for t, kind in bc.items() if kind == DIRICHLET0}
    fn = mesh.master.face_nodes
    nodes = [mesh.node_ids[e, fn[f]] for e, f, t in mesh.boundary_faces if t in tags]
    return np.unique(np.concatenate(nodes)) if nodes else np.zeros(0, dtype=int)


def solve(problem: HelmholtzProblem, method: str = "direct", rtol: float = 1e-10) -> ScalarFieldDG:
    """Continuous solution, returned in DG storage (shared nodes carry equal values).

    Raises:
        SolverFailure: singular system or residual above ``rtol``.
    """
    mesh = problem.mesh
    stiff, mass = assemble(mesh, problem.kappa)
    a = (stiff + mass).tocsr()
    rhs = load_vector(mesh, problem.source)
    n = mesh.n_global_nodes
    fixed = dirichlet_nodes(mesh, problem.bc)
    free = np.setdiff1d(np.arange(n), fixed)
    aff = a[free][:, free].tocsc()
    bf = rhs[free]
    w = np.zeros(n)
    if method == "direct":
        try:
            w[free] = spla.spsolve(aff, bf)
        except RuntimeError as exc:
            raise SolverFailure(f"sparse factorisation failed: {exc}") from exc
    elif method == "cg":
        diag = aff.diagonal()
        pre = spla.LinearOperator(aff.shape, matvec=lambda v: v / diag)
        sol, info = spla.cg(aff, bf, rtol=rtol * 1e-2, atol=0.0, M=pre, maxiter=20 * len(free))
        if info != 0:
            raise SolverFailure(f"conjugate gradients stopped with info={info}")
        w[free] = sol
    else:
        raise ValueError(f"unknown linear solver {method!r}")
    if not np.all(np.isfinite(w)):
        raise SolverFailure("non-finite solution")
    res = np.linalg.norm(aff @ w[free] - bf) / max(np.linalg.norm(bf), 1e-300)
    if res > rtol and np.linalg.norm(bf) > 0.0:
        raise SolverFailure(f"linear residual {res:.2e} exceeds {rtol:.0e}")
    log.debug("helmholtz solve: %d dofs, residual %.2e", len(free), res)
    return ScalarFieldDG(mesh, w[mesh.node_ids])
