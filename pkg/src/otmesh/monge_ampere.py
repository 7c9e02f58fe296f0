"""Fixed-point HDG solver for the Monge-Ampere second boundary value problem.

Each fixed-point step solves the linear system

    (q, v) + (u, div v) - <uh, v.n> = 0
    (q, grad w) - <qh.n, w> = -(f(H_prev, q_prev), w)
    sum_K <qh.n, mu> = 0                                   interior faces
    <grad c(q_prev) . q + tau (uh - u), mu> = -<a(q_prev), mu>   boundary faces
    (u, 1) = 0

with ``qh = q - tau (u - uh) n``, eliminates ``(q, u)`` element by element
onto the face traces ``uh`` plus one Lagrange multiplier for the mean
constraint, and then recovers the Hessian ``H = grad q`` element-wise.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import BoundaryGeometry
from .mesh import InvalidMesh, Mesh, validate

log = logging.getLogger(__name__)


class MaxIterations(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


class SingularSystem(RuntimeError):
    pass


class DensityEvaluationFailure(RuntimeError):
    pass


class InvalidAdaptedMesh(InvalidMesh):
    def __init__(self, msg, elements):
        super().__init__(msg)
        self.elements = elements


@dataclass
class MAParams:
    tau: float = 1.0
    tol_fp: float = 1e-8
    max_fp: int = 200
    tol_bc: float = 1e-6
    damping: float = 1.0
    sliding: bool = True
    raise_on_max_iter: bool = False


@dataclass
class MASolution:
    mesh: Mesh
    u: np.ndarray  # (Ne, Np)
    q: np.ndarray  # (Ne, Np, 2)
    H: np.ndarray  # (Ne, Np, 2, 2)
    uhat: np.ndarray  # (Nf, k+1)
    mean_multiplier: float
    iterations: int
    residual_history: list
    active_segments: np.ndarray  # (Nbf, nfq)
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)


def f_rhs(H, q, theta: float, density) -> np.ndarray:
    """``sqrt(|H|_F^2 + 2 theta / rho'(q))`` for arrays ``H (..., 2, 2)`` and ``q (..., 2)``."""
    H = np.asarray(H, dtype=float)
    q = np.asarray(q, dtype=float)
    shape = q.shape[:-1]
    rho = density(q.reshape(-1, 2)).reshape(shape) if callable(density) else np.broadcast_to(density, shape)
    if np.any(~(rho > 0.0)):
        idx = np.unravel_index(np.argmin(np.where(np.isnan(rho), -np.inf, rho)), shape) if shape else ()
        raise DensityEvaluationFailure(f"density {np.asarray(rho)[idx]} is not positive at q = {q[idx].tolist()}")
    return np.sqrt(np.sum(H**2, axis=(-2, -1)) + 2.0 * theta / rho)


class HDGSolver:
    """Mesh-dependent HDG operators; the element matrices are built once and reused across iterations."""

    def __init__(self, mesh: Mesh, geometry: BoundaryGeometry, tau: float = 1.0):
        self.mesh = mesh
        self.geometry = geometry
        self.tau = float(tau)
        me = mesh.master
        k = mesh.k
        self.nt = k + 1
        self.npe = me.n_nodes
        ne = mesh.n_elements
        nfq = me.n_face_quad

        # global faces: interior first, then boundary
        nint = len(mesh.interior_faces)
        self.n_faces = nint + len(mesh.boundary_faces)
        self.n_interior = nint
        gf = -np.ones((ne, 4), dtype=int)
        rev = np.zeros((ne, 4), dtype=bool)
        for i, (e1, f1, e2, f2) in enumerate(mesh.interior_faces):
            gf[e1, f1] = i
            gf[e2, f2] = i
            rev[e2, f2] = mesh.face_reversed(e1, f1, e2, f2)
        for i, (e, f, _) in enumerate(mesh.boundary_faces):
            gf[e, f] = nint + i
        if np.any(gf < 0):
            e, f = np.argwhere(gf < 0)[0]
            raise InvalidMesh(f"face {f} of element {e} is neither interior nor boundary")
        self.gf, self.rev = gf, rev
        is_bnd = np.zeros((ne, 4), dtype=bool)
        is_bnd[mesh.boundary_faces[:, 0], mesh.boundary_faces[:, 1]] = True
        self.is_bnd = is_bnd

        vg = mesh.volume_geometry
        fg = mesh.face_geometry
        phi = me.basis_at_quad
        W = vg.wdet
        self.mass = np.einsum("eq,qi,qj->eij", W, phi, phi)
        self.mass_inv = np.linalg.inv(self.mass)
        # B[e, d, i, j] = (phi_j, d_d phi_i)
        self.B = np.einsum("eq,qj,eqdi->edij", W, phi, vg.grad_basis)
        self.m_u = np.einsum("eq,qi->ei", W, phi)

        # face tables
        fphi = me.face_basis  # (4, nfq, Np)
        wj = fg.jac * me.face_quad_weights  # (Ne, 4, nfq)
        self.face_wj = wj
        mu = np.where(rev[..., None, None], me.trace_basis[::-1][None, None], me.trace_basis[None, None])  # (Ne,4,nfq,nt)
        self.mu = mu
        n = fg.normals
        self.E = np.einsum("efg,efgd,fgi,fgj->edij", wj, n, fphi, fphi)
        self.T = self.tau * np.einsum("efg,fgi,fgj->eij", wj, fphi, fphi)
        # Fn[e, d, i, f, m] = <mu_m n_d, phi_i>_f
        self.Fn = np.einsum("efg,efgd,fgi,efgm->edifm", wj, n, fphi, mu).reshape(ne, 2, self.npe, 4 * self.nt)
        self.Tf = self.tau * np.einsum("efg,fgi,efgm->eifm", wj, fphi, mu).reshape(ne, self.npe, 4 * self.nt)
        mm = self.tau * np.einsum("efg,efgm,efgn->efmn", wj, mu, mu)
        self.MM = np.zeros((ne, 4 * self.nt, 4 * self.nt))
        for f in range(4):
            s = slice(f * self.nt, (f + 1) * self.nt)
            self.MM[:, s, s] = mm[:, f]

        npe = self.npe
        A = np.zeros((ne, 3 * npe, 3 * npe))
        A[:, :npe, :npe] = self.mass
        A[:, npe:2 * npe, npe:2 * npe] = self.mass
        A[:, :npe, 2 * npe:] = self.B[:, 0]
        A[:, npe:2 * npe, 2 * npe:] = self.B[:, 1]
        A[:, 2 * npe:, :npe] = self.B[:, 0] - self.E[:, 0]
        A[:, 2 * npe:, npe:2 * npe] = self.B[:, 1] - self.E[:, 1]
        A[:, 2 * npe:, 2 * npe:] = self.T
        self.A = A
        self.Bhat = np.concatenate([self.Fn[:, 0], self.Fn[:, 1], self.Tf], axis=1)  # (Ne, 3Np, 4nt)
        self.evec = np.concatenate([np.zeros((ne, 2 * npe)), -self.m_u], axis=1)
        try:
            self.AiB = np.linalg.solve(A, self.Bhat)
            self.Aie = np.linalg.solve(A, self.evec[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"local HDG solve is singular: {exc}") from exc

        # global dof indices of each element's trace block
        self.tdofs = (gf[:, :, None] * self.nt + np.arange(self.nt)).reshape(ne, 4 * self.nt)
        self.n_dofs = self.n_faces * self.nt + 1

        # boundary-face quadrature bookkeeping
        bf = mesh.boundary_faces
        self.bnd_e, self.bnd_f = bf[:, 0], bf[:, 1]
        self.bnd_points = fg.points[self.bnd_e, self.bnd_f]  # (Nbf, nfq, 2)
        self.initial_segments = np.repeat(bf[:, 2][:, None], nfq, axis=1)

    # -- per-iteration pieces -------------------------------------------------

    def boundary_data(self, q_face: np.ndarray, segments: np.ndarray):
        """``grad c`` and ``a = c - grad c . q`` at boundary-face quadrature points."""
        pts = q_face.reshape(-1, 2)
        seg = segments.ravel()
        c = self.geometry.c(seg, pts)
        gc = self.geometry.grad_c(seg, pts)
        a = c - np.sum(gc * pts, axis=1)
        return gc.reshape(q_face.shape), a.reshape(q_face.shape[:-1])

    def element_C(self, grad_c: np.ndarray) -> np.ndarray:
        """Trace-row operators ``C[e]`` of shape ``(Ne, 4nt, 3Np)`` acting on ``(q1, q2, u)``."""
        ne, npe, nt = self.mesh.n_elements, self.npe, self.nt
        C = np.concatenate(
            [np.swapaxes(self.Fn[:, 0], 1, 2), np.swapaxes(self.Fn[:, 1], 1, 2), -np.swapaxes(self.Tf, 1, 2)], axis=2
        )
        fphi = self.mesh.master.face_basis
        wj = self.face_wj[self.bnd_e, self.bnd_f]
        mu = self.mu[self.bnd_e, self.bnd_f]
        # Gc[b, d, m, j] = <d_d c phi_j, mu_m>
        Gc = np.einsum("bg,bgd,bgj,bgm->bdmj", wj, grad_c, fphi[self.bnd_f], mu)
        for b, (e, f) in enumerate(zip(self.bnd_e, self.bnd_f)):
            rows = slice(f * nt, (f + 1) * nt)
            C[e, rows, :npe] = Gc[b, 0]
            C[e, rows, npe:2 * npe] = Gc[b, 1]
        return C

    def assemble(self, fq: np.ndarray, grad_c: np.ndarray, a: np.ndarray):
        """Condensed global system over traces plus the mean multiplier.

        Args:
            fq: right-hand side ``f`` at element quadrature points, ``(Ne, nq)``.
            grad_c, a: linearised boundary data at boundary-face quadrature points.

        Returns:
            ``(matrix, rhs, C, r)`` where ``C`` and ``r`` are reused for reconstruction.
        """
        ne, npe, nt = self.mesh.n_elements, self.npe, self.nt
        me = self.mesh.master
        W = self.mesh.volume_geometry.wdet
        ff = np.einsum("eq,eq,qi->ei", W, fq, me.basis_at_quad)
        r = np.concatenate([np.zeros((ne, 2 * npe)), -ff], axis=1)
        Air = np.linalg.solve(self.A, r[..., None])[..., 0]
        C = self.element_C(grad_c)

        g_rhs = np.zeros((ne, 4 * nt))
        wj = self.face_wj[self.bnd_e, self.bnd_f]
        mu = self.mu[self.bnd_e, self.bnd_f]
        ga = -np.einsum("bg,bg,bgm->bm", wj, a, mu)
        for b, (e, f) in enumerate(zip(self.bnd_e, self.bnd_f)):
            g_rhs[e, f * nt:(f + 1) * nt] += ga[b]

        K = np.einsum("eai,eib->eab", C, self.AiB) + self.MM
        kl = np.einsum("eai,ei->ea", C, self.Aie)
        rh = g_rhs - np.einsum("eai,ei->ea", C, Air)
        u_sl = slice(2 * npe, 3 * npe)
        crow = np.einsum("ei,eib->eb", self.m_u, self.AiB[:, u_sl])
        cl = float(np.einsum("ei,ei->", self.m_u, self.Aie[:, u_sl]))
        crhs = -float(np.einsum("ei,ei->", self.m_u, Air[:, u_sl]))

        lam = self.n_dofs - 1
        td = self.tdofs
        rows = [np.repeat(td[:, :, None], 4 * nt, axis=2).ravel(), td.ravel(), np.full(td.size, lam), [lam]]
        cols = [np.repeat(td[:, None, :], 4 * nt, axis=1).ravel(), np.full(td.size, lam), td.ravel(), [lam]]
        vals = [K.ravel(), kl.ravel(), crow.ravel(), [cl]]
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n_dofs, self.n_dofs)
        ).tocsc()
        rhs = np.zeros(self.n_dofs)
        np.add.at(rhs, td.ravel(), rh.ravel())
        rhs[lam] = crhs
        return mat, rhs, C, r

    def reconstruct(self, sol: np.ndarray, r: np.ndarray):
        """Element unknowns ``(q, u)`` and traces from the condensed solution."""
        ne, npe, nt = self.mesh.n_elements, self.npe, self.nt
        lam = sol[-1]
        uhat = sol[:-1].reshape(self.n_faces, nt)
        ul = sol[self.tdofs]
        Air = np.linalg.solve(self.A, r[..., None])[..., 0]
        local = np.einsum("eib,eb->ei", self.AiB, ul) + Air + self.Aie * lam
        q = np.stack([local[:, :npe], local[:, npe:2 * npe]], axis=-1)
        u = local[:, 2 * npe:]
        return q, u, uhat, float(lam)

    def recover_hessian(self, q: np.ndarray, u: np.ndarray, uhat: np.ndarray) -> np.ndarray:
        """``M H_ab = -(q_a, d_b phi) + <qh_a n_b, phi>`` element-wise."""
        me = self.mesh.master
        fphi = me.face_basis
        n = self.mesh.face_geometry.normals
        qf = np.einsum("fgi,eid->efgd", fphi, q)
        uf = np.einsum("fgi,ei->efg", fphi, u)
        uhf = np.einsum("efgm,efm->efg", self.mu, uhat[self.gf])
        qhat = qf - self.tau * (uf - uhf)[..., None] * n
        rhs = -np.einsum("ebij,eja->eiab", self.B, q)
        rhs += np.einsum("efg,efga,efgb,fgi->eiab", self.face_wj, qhat, n, fphi)
        return np.einsum("eij,ejab->eiab", self.mass_inv, rhs)

    def face_values(self, nodal: np.ndarray) -> np.ndarray:
        """Nodal vector field at boundary-face quadrature points, ``(Nbf, nfq, 2)``."""
        fphi = self.mesh.master.face_basis
        return np.einsum("bgi,bid->bgd", fphi[self.bnd_f], nodal[self.bnd_e])

    def boundary_jump(self, u: np.ndarray, uhat: np.ndarray) -> np.ndarray:
        """``u - uh`` at boundary-face quadrature points, ``(Nbf, nfq)``."""
        fphi = self.mesh.master.face_basis[self.bnd_f]
        e, f = self.bnd_e, self.bnd_f
        uf = np.einsum("bgi,bi->bg", fphi, u[e])
        return uf - np.einsum("bgm,bm->bg", self.mu[e, f], uhat[self.gf[e, f]])

    def l2(self, nodal_vec: np.ndarray) -> float:
        vq = np.einsum("qi,eid->eqd", self.mesh.master.basis_at_quad, nodal_vec)
        return float(np.sqrt(np.sum(vq**2 * self.mesh.volume_geometry.wdet[..., None])))


def assemble_trace_system(mesh: Mesh, geometry: BoundaryGeometry, density, theta: float, q_prev, H_prev, tau: float = 1.0):
    """Condensed trace system for one fixed-point step from the previous iterate."""
    solver = HDGSolver(mesh, geometry, tau)
    qq = np.einsum("qi,eid->eqd", mesh.master.basis_at_quad, q_prev)
    Hq = np.einsum("qi,eiab->eqab", mesh.master.basis_at_quad, H_prev)
    fq = f_rhs(Hq, qq, theta, density)
    gc, a = solver.boundary_data(solver.face_values(q_prev), solver.initial_segments)
    mat, rhs, _, _ = solver.assemble(fq, gc, a)
    return mat, rhs


def fixed_point_solve(mesh: Mesh, geometry: BoundaryGeometry, density, theta: float | None = None,
                      params: MAParams | None = None, solver: HDGSolver | None = None) -> MASolution:
    """Solve the Monge-Ampere problem for the map ``q = grad u`` from ``mesh`` onto itself.

    ``density`` is any object with ``evaluate(points) -> (values, _, clamped)``
    and a ``theta`` attribute (used when ``theta`` is None).
    """
    params = params or MAParams()
    theta = density.theta if theta is None else float(theta)
    solver = solver or HDGSolver(mesh, geometry, params.tau)
    me = mesh.master
    phi_q = me.basis_at_quad

    def rho_at(points):
        vals, _, _ = density.evaluate(points)
        return vals

    x = mesh.coords
    q = x.copy()
    H = np.broadcast_to(np.eye(2), x.shape[:2] + (2, 2)).copy()
    u = 0.5 * np.sum(x**2, axis=-1)
    segments = solver.initial_segments.copy()
    history = []
    converged = False
    t0 = time.perf_counter()
    it = 0
    uhat, lam = np.zeros((solver.n_faces, solver.nt)), 0.0
    for it in range(1, params.max_fp + 1):
        qq = np.einsum("qi,eid->eqd", phi_q, q)
        Hq = np.einsum("qi,eiab->eqab", phi_q, H)
        fq = f_rhs(Hq, qq, theta, rho_at)
        qface = solver.face_values(q)
        if params.sliding:
            segments = geometry.slide(qface.reshape(-1, 2), segments.ravel()).reshape(segments.shape)
        gc, a = solver.boundary_data(qface, segments)
        mat, rhs, _, r = solver.assemble(fq, gc, a)
        try:
            sol = spla.spsolve(mat, rhs)
        except RuntimeError as exc:
            raise SingularSystem(f"global trace system singular at iteration {it}: {exc}") from exc
        if not np.all(np.isfinite(sol)):
            raise SingularSystem(f"global trace system produced non-finite values at iteration {it}")
        q_new, u, uhat, lam = solver.reconstruct(sol, r)
        H_new = solver.recover_hessian(q_new, u, uhat)
        w = params.damping
        if w != 1.0:
            q_new = (1.0 - w) * q + w * q_new
            H_new = (1.0 - w) * H + w * H_new
        change = solver.l2(q_new - q) / max(solver.l2(q_new), 1e-300)
        history.append(change)
        q, H = q_new, H_new
        log.debug("MA iteration %d: relative change %.3e", it, change)
        if change <= params.tol_fp:
            converged = True
            break
    if not converged:
        msg = f"fixed-point iteration did not reach {params.tol_fp:.1e} in {params.max_fp} iterations (last {history[-1]:.2e})"
        if params.raise_on_max_iter:
            raise MaxIterations(msg, history)
        log.warning(msg)
    sol = MASolution(mesh, u, q, H, uhat, lam, it, history, segments, converged)
    sol.diagnostics = solution_diagnostics(sol, solver, geometry, density, theta)
    sol.diagnostics["seconds"] = time.perf_counter() - t0
    return sol


def solution_diagnostics(sol: MASolution, solver: HDGSolver, geometry, density, theta) -> dict:
    mesh = sol.mesh
    phi_q = mesh.master.basis_at_quad
    W = mesh.volume_geometry.wdet
    Hq = np.einsum("qi,eiab->eqab", phi_q, sol.H)
    qq = np.einsum("qi,eid->eqd", phi_q, sol.q)
    detH = Hq[..., 0, 0] * Hq[..., 1, 1] - Hq[..., 0, 1] * Hq[..., 1, 0]
    rho, _, clamped = density.evaluate(qq.reshape(-1, 2))
    rho = rho.reshape(detH.shape)
    resid = np.sqrt(np.sum((rho * detH - theta) ** 2 * W)) / theta
    seg = sol.active_segments.ravel()
    qface = solver.face_values(sol.q)
    cq = geometry.c(seg, qface.reshape(-1, 2))
    # the boundary rows enforce c(q) + tau (uh - u) = 0 weakly
    cvals = cq - solver.tau * solver.boundary_jump(sol.u, sol.uhat).ravel()
    u_mean = float(np.sum((sol.u @ phi_q.T) * W))
    return dict(
        iterations=sol.iterations,
        converged=sol.converged,
        final_change=sol.residual_history[-1] if sol.residual_history else None,
        min_det_H=float(detH.min()),
        max_bc_residual=float(np.abs(cvals).max()) if cvals.size else 0.0,
        max_abs_c=float(np.abs(cq).max()) if cq.size else 0.0,
        ma_residual=float(resid),
        mean_u=u_mean,
        mean_multiplier=sol.mean_multiplier,
        clamped_points=int(clamped.sum()),
    )


def q_gradient_at_quad(mesh: Mesh, q: np.ndarray) -> np.ndarray:
    """Element-wise ``grad q`` at quadrature points, ``(Ne, nq, 2, 2)`` with ``[..., a, b] = d q_a / d x_b``."""
    return np.einsum("eqbj,eja->eqab", mesh.volume_geometry.grad_basis, q)


def mapped_cell_mass(sol: MASolution, density) -> np.ndarray:
    """``int_K rho'(q) det(grad q) dx`` per element."""
    mesh = sol.mesh
    G = q_gradient_at_quad(mesh, sol.q)
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    qq = np.einsum("qi,eid->eqd", mesh.master.basis_at_quad, sol.q)
    rho = density.evaluate(qq.reshape(-1, 2))[0].reshape(det.shape)
    return np.sum(rho * det * mesh.volume_geometry.wdet, axis=1)


def equidistribution_deviation(sol: MASolution, density, theta: float | None = None) -> float:
    """Largest relative deviation of mapped-cell mass from ``theta |K|``."""
    theta = density.theta if theta is None else theta
    target = theta * sol.mesh.element_areas
    return float(np.max(np.abs(mapped_cell_mass(sol, density) - target) / target))


def extract_adapted_mesh(mesh: Mesh, sol: MASolution, geometry: BoundaryGeometry, check: bool = True) -> Mesh:
    """Average ``q`` over duplicated nodes, put boundary nodes back on the geometry, and validate.

    Boundary nodes go to their closest geometry point; a node between faces
    whose active segments meet at a corner goes to that corner.
    """
    ids = mesh.node_ids.ravel()
    n = mesh.n_global_nodes
    qn = sol.q.reshape(-1, 2)
    cnt = np.bincount(ids, minlength=n)
    avg = np.stack([np.bincount(ids, weights=qn[:, d], minlength=n) for d in range(2)], axis=1) / cnt[:, None]
    spread = np.max(np.hypot(*(qn - avg[ids]).T))
    bmask = np.zeros(n, dtype=bool)
    bmask[mesh.node_ids[mesh.boundary_node_mask]] = True
    if bmask.any():
        proj, _, _ = geometry.closest(avg[bmask])
        avg[bmask] = proj
    for gid, corner in _corner_nodes(mesh, sol.active_segments, geometry).items():
        avg[gid] = corner
    new = mesh.with_coords(avg[mesh.node_ids])
    new.duplicate_spread = float(spread)
    if check:
        rep = validate(new)
        if not rep.ok:
            raise InvalidAdaptedMesh(
                f"adapted mesh has {len(rep.invalid)} tangled element(s), first {rep.invalid[0]}", rep.invalid
            )
    return new


def _corner_nodes(mesh: Mesh, segments: np.ndarray, geometry: BoundaryGeometry) -> dict:
    """Global nodes whose two boundary faces end on adjacent segments, mapped to the shared corner.

    The segment seen from each face end is the active segment at the face
    quadrature point nearest that end.
    """
    fn = mesh.master.face_nodes
    seen: dict = {}
    for b, (e, f, _) in enumerate(mesh.boundary_faces):
        for node, s in ((fn[f][0], segments[b, 0]), (fn[f][-1], segments[b, -1])):
            seen.setdefault(int(mesh.node_ids[e, node]), set()).add(int(s))
    out = {}
    for gid, segs in seen.items():
        if len(segs) != 2:
            continue
        i, j = sorted(segs)
        for p, pair in zip(geometry.corners, geometry.corner_segments):
            if set(pair) == {i, j}:
                out[gid] = p
    return out


def corner_fix(mesh: Mesh, geometry: BoundaryGeometry) -> Mesh:
    """Snap the nearest boundary vertex to every geometry corner and re-place nearby nodes.

    Interior nodes of the touched elements follow the vertex displacement with
    the bilinear vertex weight, so shared interior edges stay conforming;
    boundary edges are then redistributed along their segment at the
    Gauss-Lobatto parameters.
    """
    me = mesh.master
    vn = me.vertex_nodes
    coords = mesh.coords.copy()
    ids = mesh.node_ids
    bmask = mesh.boundary_node_mask
    vmask = np.zeros_like(bmask)
    vmask[:, vn] = True
    cand = bmask & vmask
    gids, first = np.unique(ids[cand], return_index=True)
    pos = coords[cand][first]
    moved = {}
    for corner in geometry.corners:
        i = int(np.argmin(np.hypot(*(pos - corner).T)))
        if gids[i] in moved:
            continue
        moved[gids[i]] = corner - pos[i]
        pos[i] = corner
    if not moved or all(np.hypot(*d) == 0.0 for d in moved.values()):
        return mesh
    # bilinear vertex weights at the nodes
    r = me.nodes
    wts = np.stack([(1 - r[:, 0]) * (1 - r[:, 1]), (1 + r[:, 0]) * (1 - r[:, 1]),
                    (1 + r[:, 0]) * (1 + r[:, 1]), (1 - r[:, 0]) * (1 + r[:, 1])], axis=1) / 4.0
    touched = set()
    for e in range(mesh.n_elements):
        disp = np.zeros((4, 2))
        for c in range(4):
            if ids[e, vn[c]] in moved:
                disp[c] = moved[ids[e, vn[c]]]
        if np.any(disp):
            coords[e] += wts @ disp
            touched.add(e)
    fn = me.face_nodes
    t = 0.5 * (me.r1d + 1.0)
    for e, f, _ in mesh.boundary_faces:
        if e not in touched:
            continue
        a, b = coords[e, fn[f][0]], coords[e, fn[f][-1]]
        _, seg, _ = geometry.closest(0.5 * (a + b)[None])
        s = geometry.segments[int(seg[0])]
        if s.kind == "line":
            coords[e, fn[f]] = a + t[:, None] * (b - a)
        else:
            ta, tb = s.param(a[None])[0], s.param(b[None])[0]
            coords[e, fn[f]] = s.point_at(ta + t * (tb - ta))
    return mesh.with_coords(coords)
