"""Reference-square kernels: nodal basis, quadrature, inverse mapping, modal transform.

Node ordering is lexicographic with the first reference coordinate running
fastest, so node ``j = a + (k + 1) * b`` sits at ``(r[a], r[b])`` where ``r``
are the 1D Gauss-Lobatto points.  Local faces are numbered counter-clockwise
starting at the bottom edge; each face is parametrised by ``s in [-1, 1]`` in
the counter-clockwise direction, so the outward normal is the tangent rotated
clockwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

MAX_DEGREE = 8
INSIDE_EPS = 1e-8


class NoConvergence(RuntimeError):
    """Newton iteration for the inverse isoparametric map did not converge."""


def gauss_lobatto_points(k: int) -> np.ndarray:
    """Return the ``k + 1`` Gauss-Lobatto-Legendre points on [-1, 1]."""
    if k == 1:
        return np.array([-1.0, 1.0])
    interior = npleg.legroots(npleg.legder([0] * k + [1]))
    return np.concatenate(([-1.0], np.sort(interior), [1.0]))


def _legendre_tables(x: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of P_0..P_n at points x, shape (len(x), n + 1)."""
    x = np.asarray(x, dtype=float)
    vals = npleg.legvander(x, n)
    ders = np.empty_like(vals)
    for m in range(n + 1):
        coef = np.zeros(m + 1)
        coef[m] = 1.0
        ders[:, m] = npleg.legval(x, npleg.legder(coef)) if m > 0 else 0.0
    return vals, ders


class Lagrange1D:
    """Lagrange basis on a fixed 1D node set, evaluated through a Legendre Vandermonde."""

    def __init__(self, nodes: np.ndarray):
        self.nodes = np.asarray(nodes, dtype=float)
        self.n = len(self.nodes) - 1
        vander, _ = _legendre_tables(self.nodes, self.n)
        self._coef = np.linalg.inv(vander)

    def __call__(self, x) -> np.ndarray:
        vals, _ = _legendre_tables(np.atleast_1d(x), self.n)
        return vals @ self._coef

    def deriv(self, x) -> np.ndarray:
        _, ders = _legendre_tables(np.atleast_1d(x), self.n)
        return ders @ self._coef


# counter-clockwise face parametrisations: xi = origin + s * direction
_FACE_ORIGIN = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
_FACE_DIR = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])


@dataclass(frozen=True, eq=False)
class MasterElement:
    """Precomputed tables for the degree-``k`` tensor-product element on [-1, 1]^2."""

    k: int
    r1d: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    quad_points: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    basis_at_quad: np.ndarray = field(repr=False)
    grad_basis_at_quad: np.ndarray = field(repr=False)
    grad_basis_at_nodes: np.ndarray = field(repr=False)
    modes: tuple = field(repr=False)
    vandermonde: np.ndarray = field(repr=False)
    modal_matrix: np.ndarray = field(repr=False)
    face_nodes: np.ndarray = field(repr=False)
    face_quad_s: np.ndarray = field(repr=False)
    face_quad_weights: np.ndarray = field(repr=False)
    face_basis: np.ndarray = field(repr=False)
    face_grad_basis: np.ndarray = field(repr=False)
    trace_basis: np.ndarray = field(repr=False)
    lagrange: Lagrange1D = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return (self.k + 1) ** 2

    @property
    def n_quad(self) -> int:
        return len(self.quad_weights)

    @property
    def n_face_quad(self) -> int:
        return len(self.face_quad_weights)

    @property
    def vertex_nodes(self) -> np.ndarray:
        k = self.k
        return np.array([0, k, (k + 1) ** 2 - 1, k * (k + 1)])

    def face_to_ref(self, f: int, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return _FACE_ORIGIN[f] + s[:, None] * _FACE_DIR[f]

    def face_direction(self, f: int) -> np.ndarray:
        return _FACE_DIR[f]

    def eval_basis(self, xi, derivative: bool = False):
        """Basis values at reference points.

        Args:
            xi: a single point ``(2,)`` or an array ``(P, 2)``.
            derivative: also return reference gradients, shape ``(P, 2, Np)``.

        Returns:
            ``(P, Np)`` values (``(Np,)`` for a single point) and optionally the gradients.
        """
        xi = np.asarray(xi, dtype=float)
        single = xi.ndim == 1
        xi = np.atleast_2d(xi)
        lx = self.lagrange(xi[:, 0])
        ly = self.lagrange(xi[:, 1])
        vals = (lx[:, None, :] * ly[:, :, None]).reshape(len(xi), -1)
        if not derivative:
            return vals[0] if single else vals
        dlx = self.lagrange.deriv(xi[:, 0])
        dly = self.lagrange.deriv(xi[:, 1])
        grads = np.stack(
            [
                (dlx[:, None, :] * ly[:, :, None]).reshape(len(xi), -1),
                (lx[:, None, :] * dly[:, :, None]).reshape(len(xi), -1),
            ],
            axis=1,
        )
        if single:
            return vals[0], grads[0]
        return vals, grads

    def eval_modes(self, xi) -> np.ndarray:
        """Orthonormal tensor Legendre modes at reference points, shape ``(P, Np)``."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        px, _ = _legendre_tables(xi[:, 0], self.k)
        py, _ = _legendre_tables(xi[:, 1], self.k)
        scale = np.sqrt((2 * np.arange(self.k + 1) + 1) / 2.0)
        px = px * scale
        py = py * scale
        return np.stack([px[:, m] * py[:, n] for m, n in self.modes], axis=1)

    def nodal_to_modal(self, nodal: np.ndarray) -> np.ndarray:
        """Modal coefficients; the node index is the last axis."""
        return np.asarray(nodal) @ self.modal_matrix.T

    def modal_to_nodal(self, modal: np.ndarray) -> np.ndarray:
        return np.asarray(modal) @ self.vandermonde.T

    def truncation_mask(self, degree: int | None = None) -> np.ndarray:
        """Modes kept when truncating to per-variable degree ``degree`` (default ``k - 1``)."""
        degree = self.k - 1 if degree is None else degree
        return np.array([m <= degree and n <= degree for m, n in self.modes])

    def truncate_modal(self, modal: np.ndarray, degree: int | None = None) -> np.ndarray:
        return np.where(self.truncation_mask(degree), modal, 0.0)

    def forward_map(self, elem_nodes: np.ndarray, xi) -> np.ndarray:
        """Physical coordinates of reference points for one element."""
        return self.eval_basis(np.atleast_2d(xi)) @ elem_nodes

    def inverse_map(self, elem_nodes, x, max_newton: int = 30, tol: float = 1e-11):
        """Reference coordinates of physical point ``x`` in a single element.

        Returns:
            ``(xi, inside)`` where ``inside`` tests ``xi`` against the inflated square.

        Raises:
            NoConvergence: when Newton fails from both the centre and the nearest node.
        """
        elem_nodes = np.asarray(elem_nodes, dtype=float)
        x = np.asarray(x, dtype=float)
        xi, ok = self.inverse_map_batch(elem_nodes[None], x[None], max_newton=max_newton, tol=tol)
        if not ok[0]:
            j = np.argmin(np.sum((elem_nodes - x) ** 2, axis=1))
            xi, ok = self.inverse_map_batch(
                elem_nodes[None], x[None], xi0=self.nodes[j][None], max_newton=max_newton, tol=tol
            )
            if not ok[0]:
                raise NoConvergence(f"inverse map did not converge for point {x.tolist()}")
        xi = xi[0]
        return xi, bool(np.all(np.abs(xi) <= 1.0 + INSIDE_EPS))

    def inverse_map_batch(self, elem_nodes, x, xi0=None, max_newton: int = 30, tol: float = 1e-11):
        """Vectorised Newton solve of ``sum_j x_j phi_j(xi) = x`` for many (element, point) pairs.

        Args:
            elem_nodes: ``(P, Np, 2)`` node coordinates, one element per pair.
            x: ``(P, 2)`` target points.
            xi0: optional ``(P, 2)`` initial guesses (default: element centre).

        Returns:
            ``(xi, converged)`` with shapes ``(P, 2)`` and ``(P,)``.
        """
        elem_nodes = np.asarray(elem_nodes, dtype=float)
        x = np.asarray(x, dtype=float)
        npair = len(x)
        xi = np.zeros((npair, 2)) if xi0 is None else np.array(xi0, dtype=float)
        span = elem_nodes.max(axis=1) - elem_nodes.min(axis=1)
        hk = np.maximum(np.hypot(span[:, 0], span[:, 1]), 1e-300)
        converged = np.zeros(npair, dtype=bool)
        active = np.arange(npair)
        for _ in range(max_newton + 1):
            if active.size == 0:
                break
            phi, dphi = self.eval_basis(xi[active], derivative=True)
            xe = elem_nodes[active]
            res = np.einsum("pj,pjd->pd", phi, xe) - x[active]
            done = np.hypot(res[:, 0], res[:, 1]) <= tol * hk[active]
            converged[active[done]] = True
            active, res, dphi, xe = active[~done], res[~done], dphi[~done], xe[~done]
            if active.size == 0:
                break
            # jac[p, d, r] = d x_d / d xi_r
            jac = np.einsum("prj,pjd->pdr", dphi, xe)
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            bad = np.abs(det) < 1e-300
            det = np.where(bad, 1.0, det)
            step = np.empty_like(res)
            step[:, 0] = (jac[:, 1, 1] * res[:, 0] - jac[:, 0, 1] * res[:, 1]) / det
            step[:, 1] = (-jac[:, 1, 0] * res[:, 0] + jac[:, 0, 0] * res[:, 1]) / det
            xi[active] = np.clip(xi[active] - step, -4.0, 4.0)
            keep = ~bad
            active = active[keep]
        return xi, converged


@lru_cache(maxsize=None)
def build_master(k: int) -> MasterElement:
    """Build (and cache) the degree-``k`` master element, ``1 <= k <= 8``."""
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= MAX_DEGREE:
        raise ValueError(f"polynomial degree must be an integer in [1, {MAX_DEGREE}], got {k!r}")
    k = int(k)
    r = gauss_lobatto_points(k)
    lag = Lagrange1D(r)
    nodes = np.array([(r[a], r[b]) for b in range(k + 1) for a in range(k + 1)])

    gx, gw = npleg.leggauss(k + 2)
    quad_points = np.array([(gx[a], gx[b]) for b in range(k + 2) for a in range(k + 2)])
    quad_weights = np.array([gw[a] * gw[b] for b in range(k + 2) for a in range(k + 2)])

    n1 = k + 1
    idx = np.arange(n1 * n1).reshape(n1, n1)  # idx[b, a]
    face_nodes = np.array([idx[0, :], idx[:, k], idx[k, ::-1], idx[::-1, 0]])

    modes = tuple(sorted(((m, n) for n in range(n1) for m in range(n1)), key=lambda t: (t[0] + t[1], t[1])))

    # placeholder instance to reuse the evaluation methods while filling tables
    me = MasterElement(
        k=k, r1d=r, nodes=nodes, quad_points=quad_points, quad_weights=quad_weights,
        basis_at_quad=None, grad_basis_at_quad=None, grad_basis_at_nodes=None,
        modes=modes, vandermonde=None, modal_matrix=None, face_nodes=face_nodes,
        face_quad_s=gx, face_quad_weights=gw, face_basis=None, face_grad_basis=None,
        trace_basis=None, lagrange=lag,
    )
    phi_q, dphi_q = me.eval_basis(quad_points, derivative=True)
    _, dphi_n = me.eval_basis(nodes, derivative=True)
    vander = me.eval_modes(nodes)
    fb, fgb = [], []
    for f in range(4):
        v, g = me.eval_basis(me.face_to_ref(f, gx), derivative=True)
        fb.append(v)
        fgb.append(g)
    tables = dict(
        basis_at_quad=phi_q,
        grad_basis_at_quad=dphi_q,
        grad_basis_at_nodes=dphi_n,
        vandermonde=vander,
        modal_matrix=np.linalg.inv(vander),
        face_basis=np.array(fb),
        face_grad_basis=np.array(fgb),
        trace_basis=lag(gx),
    )
    for name, value in tables.items():
        value.setflags(write=False)
        object.__setattr__(me, name, value)
    for arr in (r, nodes, quad_points, quad_weights, face_nodes, gx, gw):
        arr.setflags(write=False)
    return me
