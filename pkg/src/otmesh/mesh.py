"""High-order quadrilateral meshes with DG-style duplicated node storage."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .master_element import INSIDE_EPS, MasterElement, build_master

UNTAGGED = -1


class InvalidMesh(ValueError):
    """A mesh element has a non-positive Jacobian determinant."""


class NotFound(LookupError):
    """A query point lies outside the inflated bounding box of the mesh."""


@dataclass(frozen=True)
class FaceGeometry:
    points: np.ndarray  # (Ne, 4, nfq, 2)
    normals: np.ndarray  # (Ne, 4, nfq, 2), outward unit
    jac: np.ndarray  # (Ne, 4, nfq) arc-length factor ds_phys / ds_ref


@dataclass(frozen=True)
class VolumeGeometry:
    points: np.ndarray  # (Ne, nq, 2)
    jac: np.ndarray  # (Ne, nq, 2, 2), jac[..., d, r] = dx_d / dxi_r
    det: np.ndarray  # (Ne, nq)
    jinv: np.ndarray  # (Ne, nq, 2, 2), jinv[..., r, d] = dxi_r / dx_d
    grad_basis: np.ndarray  # (Ne, nq, 2, Np) physical gradients
    wdet: np.ndarray  # (Ne, nq) quadrature weight times det J


class Mesh:
    """Curved quadrilateral mesh of degree ``k``.

    Args:
        k: polynomial degree of the geometry.
        coords: ``(Ne, Np, 2)`` node coordinates, duplicated at shared nodes.
        interior_faces: ``(n, 4)`` records ``(e1, f1, e2, f2)``.
        boundary_faces: ``(n, 3)`` records ``(e, f, segment_tag)``.
    """

    def __init__(self, k, coords, interior_faces=None, boundary_faces=None, node_tol: float = 1e-10, node_ids=None):
        self.k = int(k)
        self.master: MasterElement = build_master(self.k)
        self.coords = np.array(coords, dtype=float)
        if self.coords.ndim != 3 or self.coords.shape[1:] != (self.master.n_nodes, 2):
            raise ValueError(f"coords must have shape (Ne, {self.master.n_nodes}, 2), got {self.coords.shape}")
        self.coords.setflags(write=False)
        self.node_ids = self._identify_nodes(node_tol) if node_ids is None else np.asarray(node_ids)
        if interior_faces is None or boundary_faces is None:
            interior_faces, boundary_faces = self._build_faces()
        self.interior_faces = np.asarray(interior_faces, dtype=int).reshape(-1, 4)
        self.boundary_faces = np.asarray(boundary_faces, dtype=int).reshape(-1, 3)
        self.interior_faces.setflags(write=False)

    @property
    def n_elements(self) -> int:
        return self.coords.shape[0]

    @property
    def n_nodes_per_element(self) -> int:
        return self.master.n_nodes

    @property
    def n_global_nodes(self) -> int:
        return int(self.node_ids.max()) + 1

    @cached_property
    def bbox(self) -> np.ndarray:
        pts = self.coords.reshape(-1, 2)
        return np.array([pts.min(axis=0), pts.max(axis=0)])

    @property
    def diameter(self) -> float:
        lo, hi = self.bbox
        return float(np.hypot(*(hi - lo)))

    def with_coords(self, coords, boundary_faces=None) -> "Mesh":
        """Same connectivity and tags, new node positions."""
        bf = self.boundary_faces if boundary_faces is None else boundary_faces
        return Mesh(self.k, coords, self.interior_faces, bf, node_ids=self.node_ids)

    def with_tags(self, tags) -> "Mesh":
        bf = self.boundary_faces.copy()
        bf[:, 2] = tags
        return Mesh(self.k, self.coords, self.interior_faces, bf, node_ids=self.node_ids)

    def _identify_nodes(self, tol: float) -> np.ndarray:
        pts = self.coords.reshape(-1, 2)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        r = tol * max(1.0, float(np.hypot(*(hi - lo))))
        pairs = cKDTree(pts).query_pairs(r, output_type="ndarray")
        n = len(pts)
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(graph, directed=False)
        # renumber in order of first appearance for reproducibility
        _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(first)
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        return rank[inv].reshape(self.coords.shape[:2])

    def _build_faces(self):
        vn = self.master.vertex_nodes
        owner = {}
        interior, boundary = [], []
        for e in range(self.n_elements):
            ids = self.node_ids[e, vn]
            for f in range(4):
                key = tuple(sorted((ids[f], ids[(f + 1) % 4])))
                if key in owner:
                    e1, f1 = owner.pop(key)
                    interior.append((e1, f1, e, f))
                else:
                    owner[key] = (e, f)
        for (e, f) in sorted(owner.values()):
            boundary.append((e, f, UNTAGGED))
        return np.array(interior, dtype=int).reshape(-1, 4), np.array(boundary, dtype=int).reshape(-1, 3)

    def face_reversed(self, e1: int, f1: int, e2: int, f2: int) -> bool:
        """True if face ``f2`` of ``e2`` runs opposite to face ``f1`` of ``e1``."""
        fn = self.master.face_nodes
        a = self.node_ids[e1, fn[f1]]
        b = self.node_ids[e2, fn[f2]]
        if np.array_equal(a, b[::-1]):
            return True
        if np.array_equal(a, b):
            return False
        raise InvalidMesh(f"faces ({e1},{f1}) and ({e2},{f2}) do not match")

    @cached_property
    def volume_geometry(self) -> VolumeGeometry:
        me = self.master
        pts = np.einsum("qj,ejd->eqd", me.basis_at_quad, self.coords)
        jac = np.einsum("qrj,ejd->eqdr", me.grad_basis_at_quad, self.coords)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        safe = np.where(det == 0.0, 1e-300, det)
        jinv = np.empty_like(jac)
        jinv[..., 0, 0] = jac[..., 1, 1] / safe
        jinv[..., 0, 1] = -jac[..., 0, 1] / safe
        jinv[..., 1, 0] = -jac[..., 1, 0] / safe
        jinv[..., 1, 1] = jac[..., 0, 0] / safe
        grad = np.einsum("eqrd,qrj->eqdj", jinv, me.grad_basis_at_quad)
        return VolumeGeometry(pts, jac, det, jinv, grad, det * me.quad_weights)

    @cached_property
    def face_geometry(self) -> FaceGeometry:
        me = self.master
        pts = np.einsum("fgj,ejd->efgd", me.face_basis, self.coords)
        # tangent = J . dxi/ds
        dxds = np.einsum("fgrj,ejd,fr->efgd", me.face_grad_basis, self.coords, np.array([me.face_direction(f) for f in range(4)]))
        length = np.hypot(dxds[..., 0], dxds[..., 1])
        normals = np.stack([dxds[..., 1], -dxds[..., 0]], axis=-1) / length[..., None]
        return FaceGeometry(pts, normals, length)

    @cached_property
    def element_areas(self) -> np.ndarray:
        return self.volume_geometry.wdet.sum(axis=1)

    @property
    def area(self) -> float:
        return float(self.element_areas.sum())

    @cached_property
    def node_grad_operators(self) -> np.ndarray:
        """Physical differentiation matrices at nodes, shape ``(Ne, Np, 2, Np)``."""
        dphi = self.master.grad_basis_at_nodes  # (Np_i, 2, Np_j)
        jac = np.einsum("irj,ejd->eidr", dphi, self.coords)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        det = np.where(det == 0.0, 1e-300, det)
        jinv = np.empty_like(jac)
        jinv[..., 0, 0] = jac[..., 1, 1] / det
        jinv[..., 0, 1] = -jac[..., 0, 1] / det
        jinv[..., 1, 0] = -jac[..., 1, 0] / det
        jinv[..., 1, 1] = jac[..., 0, 0] / det
        return np.einsum("eird,irj->eidj", jinv, dphi)

    @cached_property
    def boundary_node_mask(self) -> np.ndarray:
        """``(Ne, Np)`` True for nodes lying on a boundary face."""
        mask = np.zeros(self.coords.shape[:2], dtype=bool)
        fn = self.master.face_nodes
        for e, f, _ in self.boundary_faces:
            mask[e, fn[f]] = True
        # a node shared with a boundary node is itself on the boundary
        on = np.zeros(self.n_global_nodes, dtype=bool)
        on[self.node_ids[mask]] = True
        return on[self.node_ids]

    @cached_property
    def locator(self) -> "PointLocator":
        return PointLocator(self)

    def locate_points(self, x):
        return self.locator.locate(x)

    def locate_point(self, x):
        e, xi, extrap = self.locator.locate(np.asarray(x, dtype=float)[None])
        return int(e[0]), xi[0], bool(extrap[0])


def element_size(mesh: Mesh, e: int | None = None):
    """Smallest distance between consecutive nodes on the element's edges."""
    fn = mesh.master.face_nodes
    chains = mesh.coords[:, fn, :]  # (Ne, 4, k+1, 2)
    d = np.diff(chains, axis=2)
    sizes = np.hypot(d[..., 0], d[..., 1]).min(axis=(1, 2))
    return sizes if e is None else float(sizes[e])


def h_min(mesh: Mesh) -> float:
    return float(element_size(mesh).min())


def jacobians(mesh: Mesh, e: int) -> tuple[np.ndarray, np.ndarray]:
    """det J and J^{-1} at the quadrature points of element ``e``."""
    g = mesh.volume_geometry
    return g.det[e], g.jinv[e]


@dataclass
class ValidationReport:
    min_det: float
    invalid: list = field(default_factory=list)
    high_aspect: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.invalid


def validate(mesh: Mesh, aspect_warn: float = 100.0) -> ValidationReport:
    """Flag elements with ``min det J <= 0`` or a Jacobian aspect ratio above ``aspect_warn``."""
    g = mesh.volume_geometry
    min_det = g.det.min(axis=1)
    sv = np.linalg.svd(g.jac, compute_uv=False)
    aspect = (sv[..., 0] / np.maximum(sv[..., 1], 1e-300)).max(axis=1)
    return ValidationReport(
        min_det=float(min_det.min()),
        invalid=[int(e) for e in np.flatnonzero(min_det <= 0.0)],
        high_aspect=[int(e) for e in np.flatnonzero((aspect > aspect_warn) & (min_det > 0.0))],
    )


def check_valid(mesh: Mesh) -> None:
    rep = validate(mesh)
    if not rep.ok:
        e = rep.invalid[0]
        raise InvalidMesh(
            f"element {e} has non-positive Jacobian (min det J = {mesh.volume_geometry.det[e].min():.3e});"
            f" {len(rep.invalid)} invalid element(s) in total"
        )


class PointLocator:
    """Uniform background grid of element candidates plus batched inverse mapping."""

    def __init__(self, mesh: Mesh, max_mean_candidates: float = 4.0):
        self.mesh = mesh
        lo, hi = mesh.bbox
        self.lo = lo
        diam = max(mesh.diameter, 1e-300)
        self.inflate = 1e-6 * diam
        ext = np.maximum(hi - lo, 1e-12 * diam)
        ebox_lo = mesh.coords.min(axis=1)
        ebox_hi = mesh.coords.max(axis=1)
        pad = 0.05 * (ebox_hi - ebox_lo).max(axis=1, keepdims=True) + self.inflate
        ebox_lo, ebox_hi = ebox_lo - pad, ebox_hi + pad
        ne = mesh.n_elements
        n = max(1, int(math.ceil(math.sqrt(ne))))
        while True:
            self.nbins = np.array([n, n])
            self.width = ext / self.nbins
            i0 = self._bin_index(ebox_lo)
            i1 = self._bin_index(ebox_hi)
            counts = (i1[:, 0] - i0[:, 0] + 1) * (i1[:, 1] - i0[:, 1] + 1)
            if counts.sum() / (n * n) <= max_mean_candidates or n > 4 * math.sqrt(ne) + 4:
                break
            n = int(math.ceil(1.5 * n))
        bins, elems = [], []
        for e in range(ne):
            for bx in range(i0[e, 0], i1[e, 0] + 1):
                for by in range(i0[e, 1], i1[e, 1] + 1):
                    bins.append(bx + n * by)
                    elems.append(e)
        bins, elems = np.array(bins), np.array(elems)
        order = np.lexsort((elems, bins))
        self.cand = elems[order]
        self.start = np.searchsorted(bins[order], np.arange(n * n + 1))
        self.centroid_tree = cKDTree(mesh.coords.mean(axis=1))

    @property
    def mean_candidates(self) -> float:
        return len(self.cand) / self.nbins.prod()

    def _bin_index(self, x):
        idx = np.floor((np.atleast_2d(x) - self.lo) / self.width).astype(int)
        return np.clip(idx, 0, self.nbins - 1)

    def locate(self, x):
        """Containing element, reference coordinates and extrapolation flag per point.

        Points outside every element are assigned to the candidate with the
        smallest reference-coordinate excess; their ``xi`` is clamped to the
        square and flagged.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi = self.mesh.bbox
        outside = np.any((x < lo - self.inflate) | (x > hi + self.inflate), axis=1)
        if outside.any():
            bad = x[np.flatnonzero(outside)[0]]
            raise NotFound(f"point {bad.tolist()} lies outside the mesh bounding box")
        npt = len(x)
        b = self._bin_index(x)
        flat = b[:, 0] + self.nbins[0] * b[:, 1]
        s0, s1 = self.start[flat], self.start[flat + 1]
        counts = s1 - s0
        pt = np.repeat(np.arange(npt), counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        el = self.cand[np.repeat(s0, counts) + offs]

        best_e = np.full(npt, -1)
        best_xi = np.zeros((npt, 2))
        best_ex = np.full(npt, np.inf)
        self._select(x, pt, el, best_e, best_xi, best_ex)

        # no inside hit: widen the search to the nearest element centroids
        miss = np.flatnonzero(best_ex > INSIDE_EPS)
        if miss.size:
            kq = min(8, self.mesh.n_elements)
            _, nn = self.centroid_tree.query(x[miss], k=kq)
            nn = np.asarray(nn).reshape(len(miss), kq)
            self._select(x, np.repeat(miss, kq), nn.ravel(), best_e, best_xi, best_ex)
        if np.any(best_e < 0):
            bad = x[np.flatnonzero(best_e < 0)[0]]
            raise NotFound(f"could not map point {bad.tolist()} into any element")
        extrap = best_ex > INSIDE_EPS
        best_xi[extrap] = np.clip(best_xi[extrap], -1.0, 1.0)
        return best_e, best_xi, extrap

    def _select(self, x, pt, el, best_e, best_xi, best_ex):
        if pt.size == 0:
            return
        xi, ok = self.mesh.master.inverse_map_batch(self.mesh.coords[el], x[pt])
        excess = np.where(ok, np.max(np.abs(xi), axis=1) - 1.0, np.inf)
        # stable per-point minimum: sort by (point, excess)
        order = np.lexsort((excess, pt))
        pt_s, ex_s = pt[order], excess[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = pt_s[1:] != pt_s[:-1]
        sel = order[first]
        p = pt[sel]
        better = excess[sel] < best_ex[p]
        p, sel = p[better], sel[better]
        best_e[p] = el[sel]
        best_xi[p] = xi[sel]
        best_ex[p] = excess[sel]


def assign_boundary_tags(mesh: Mesh, geometry, rel_tol: float = 1e-8) -> Mesh:
    """Tag every boundary face with the segment containing all of its nodes.

    Raises:
        InvalidMesh: if some boundary face matches no segment.
    """
    tol = rel_tol * max(mesh.diameter, 1e-300)
    fn = mesh.master.face_nodes
    tags = np.empty(len(mesh.boundary_faces), dtype=int)
    for i, (e, f, _) in enumerate(mesh.boundary_faces):
        pts = mesh.coords[e, fn[f]]
        best, best_err = -1, np.inf
        for s, seg in enumerate(geometry.segments):
            err = np.max(np.hypot(*(seg.project(pts) - pts).T))
            if err < best_err:
                best, best_err = s, err
        if best_err > tol:
            raise InvalidMesh(f"boundary face (element {e}, face {f}) lies on no geometry segment (gap {best_err:.3e})")
        tags[i] = best
    return mesh.with_tags(tags)


def interpolate_at(mesh: Mesh, e: int, xi) -> np.ndarray:
    """Physical coordinates of reference points in element ``e``."""
    return mesh.master.forward_map(mesh.coords[e], xi)
