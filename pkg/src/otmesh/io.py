"""ASCII mesh (OTM) and field (OTF) files, and legacy VTK export.

OTM layout::

    otm 1 <k> <Ne> <Np>
    <x y pairs for element 0, Np of them, one line>
    ...
    faces <count>
    e1 f1 e2 f2          # interior face
    e  f  -1 <segtag>    # boundary face

OTF layout::

    otf 1 <k> <Ne> <ncomp>
    <ncomp values>       # Np lines per element

``#`` starts a comment anywhere on a line.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh, check_valid


class ParseError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


def _records(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def load_mesh(path, validate: bool = True) -> Mesh:
    """Read an OTM file.

    Raises:
        ParseError: malformed content, with the offending line number.
        InvalidMesh: an element with non-positive Jacobian (when ``validate``).
    """
    recs = _records(path)
    try:
        lineno, tok = next(recs)
    except StopIteration:
        raise ParseError(path, 0, "empty file") from None
    if len(tok) != 5 or tok[0] != "otm" or tok[1] != "1":
        raise ParseError(path, lineno, "expected header 'otm 1 <k> <Ne> <Np>'")
    try:
        k, ne, np_ = int(tok[2]), int(tok[3]), int(tok[4])
    except ValueError:
        raise ParseError(path, lineno, "non-integer header field") from None
    if np_ != (k + 1) ** 2:
        raise ParseError(path, lineno, f"Np={np_} inconsistent with k={k}")
    coords = np.empty((ne, np_, 2))
    for e in range(ne):
        try:
            lineno, tok = next(recs)
        except StopIteration:
            raise ParseError(path, lineno, f"file ends before element {e}") from None
        if len(tok) != 2 * np_:
            raise ParseError(path, lineno, f"element {e}: expected {2 * np_} coordinates, got {len(tok)}")
        try:
            coords[e] = np.array(tok, dtype=float).reshape(np_, 2)
        except ValueError:
            raise ParseError(path, lineno, f"element {e}: bad number") from None
    try:
        lineno, tok = next(recs)
    except StopIteration:
        raise ParseError(path, lineno, "missing 'faces' section") from None
    if len(tok) != 2 or tok[0] != "faces":
        raise ParseError(path, lineno, "expected 'faces <count>'")
    nf = int(tok[1])
    interior, boundary = [], []
    for i in range(nf):
        try:
            lineno, tok = next(recs)
        except StopIteration:
            raise ParseError(path, lineno, f"file ends before face record {i}") from None
        if len(tok) != 4:
            raise ParseError(path, lineno, f"face record {i}: expected 4 integers")
        try:
            a, fa, b, fb = map(int, tok)
        except ValueError:
            raise ParseError(path, lineno, f"face record {i}: non-integer field") from None
        if not (0 <= a < ne) or not (0 <= fa < 4):
            raise ParseError(path, lineno, f"face record {i}: element/face index out of range")
        if b == -1:
            boundary.append((a, fa, fb))
        else:
            if not (0 <= b < ne) or not (0 <= fb < 4):
                raise ParseError(path, lineno, f"face record {i}: element/face index out of range")
            interior.append((a, fa, b, fb))
    mesh = Mesh(k, coords, np.array(interior, dtype=int).reshape(-1, 4), np.array(boundary, dtype=int).reshape(-1, 3))
    if validate:
        check_valid(mesh)
    return mesh


def save_mesh(mesh: Mesh, path) -> None:
    lines = [f"otm 1 {mesh.k} {mesh.n_elements} {mesh.n_nodes_per_element}"]
    for e in range(mesh.n_elements):
        lines.append(" ".join(f"{v:.17g}" for v in mesh.coords[e].ravel()))
    lines.append(f"faces {len(mesh.interior_faces) + len(mesh.boundary_faces)}")
    lines.extend(" ".join(map(str, r)) for r in mesh.interior_faces)
    lines.extend(f"{e} {f} -1 {t}" for e, f, t in mesh.boundary_faces)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_field_array(path) -> tuple[int, np.ndarray]:
    """Read an OTF file; returns ``(k, values)`` with shape ``(Ne, Np, ncomp)``."""
    recs = _records(path)
    try:
        lineno, tok = next(recs)
    except StopIteration:
        raise ParseError(path, 0, "empty file") from None
    if len(tok) != 5 or tok[0] != "otf" or tok[1] != "1":
        raise ParseError(path, lineno, "expected header 'otf 1 <k> <Ne> <ncomp>'")
    k, ne, nc = int(tok[2]), int(tok[3]), int(tok[4])
    np_ = (k + 1) ** 2
    vals = np.empty((ne * np_, nc))
    for i in range(ne * np_):
        try:
            lineno, tok = next(recs)
        except StopIteration:
            raise ParseError(path, lineno, f"file ends at value row {i} of {ne * np_}") from None
        if len(tok) != nc:
            raise ParseError(path, lineno, f"expected {nc} values, got {len(tok)}")
        try:
            vals[i] = [float(t) for t in tok]
        except ValueError:
            raise ParseError(path, lineno, "bad number") from None
    return k, vals.reshape(ne, np_, nc)


def save_field_array(values: np.ndarray, k: int, path) -> None:
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[..., None]
    ne, np_, nc = values.shape
    lines = [f"otf 1 {k} {ne} {nc}"]
    lines.extend(" ".join(f"{v:.17g}" for v in row) for row in values.reshape(-1, nc))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_vtk(mesh: Mesh, path, point_data: dict | None = None, title: str = "otmesh") -> None:
    """Legacy ASCII unstructured grid; each element is split into ``k*k`` linear quads.

    ``point_data`` maps names to nodal arrays of shape ``(Ne, Np)`` (scalars)
    or ``(Ne, Np, 2)`` (vectors).
    """
    k = mesh.k
    ne, np_ = mesh.n_elements, mesh.n_nodes_per_element
    pts = mesh.coords.reshape(-1, 2)
    cells = []
    for e in range(ne):
        base = e * np_
        for b in range(k):
            for a in range(k):
                n0 = base + a + (k + 1) * b
                cells.append((n0, n0 + 1, n0 + k + 2, n0 + k + 1))
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {len(pts)} double")
    out.extend(f"{x:.17g} {y:.17g} 0" for x, y in pts)
    out.append(f"CELLS {len(cells)} {5 * len(cells)}")
    out.extend("4 " + " ".join(map(str, c)) for c in cells)
    out.append(f"CELL_TYPES {len(cells)}")
    out.extend(["9"] * len(cells))
    if point_data:
        out.append(f"POINT_DATA {len(pts)}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape == (ne, np_):
                out.append(f"SCALARS {name} double 1")
                out.append("LOOKUP_TABLE default")
                out.extend(f"{v:.17g}" for v in arr.ravel())
            elif arr.shape == (ne, np_, 2):
                out.append(f"VECTORS {name} double")
                out.extend(f"{u:.17g} {v:.17g} 0" for u, v in arr.reshape(-1, 2))
            else:
                for c in range(arr.shape[-1]):
                    out.append(f"SCALARS {name}_{c} double 1")
                    out.append("LOOKUP_TABLE default")
                    out.extend(f"{v:.17g}" for v in arr[..., c].ravel())
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
