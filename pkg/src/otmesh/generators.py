"""Structured mesh generators for the shipped test geometries."""

from __future__ import annotations

import numpy as np

from . import geometry as geo
from .master_element import build_master
from .mesh import Mesh, assign_boundary_tags


def mapped_mesh(xs, ys, k: int, mapping=None) -> Mesh:
    """Tensor mesh on logical breakpoints ``xs`` x ``ys`` pushed through ``mapping(X, Y)``.

    Element ``i + nx * j`` spans ``[xs[i], xs[i+1]] x [ys[j], ys[j+1]]`` in
    logical space; high-order nodes are placed by evaluating the mapping at the
    Gauss-Lobatto points, so curved boundaries are represented isoparametrically.
    """
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    me = build_master(k)
    nx, ny = len(xs) - 1, len(ys) - 1
    r = 0.5 * (me.nodes + 1.0)
    coords = np.empty((nx * ny, me.n_nodes, 2))
    for j in range(ny):
        for i in range(nx):
            X = xs[i] + r[:, 0] * (xs[i + 1] - xs[i])
            Y = ys[j] + r[:, 1] * (ys[j + 1] - ys[j])
            coords[i + nx * j] = np.stack([X, Y], axis=1) if mapping is None else np.stack(mapping(X, Y), axis=1)
    interior, boundary = [], []
    for j in range(ny):
        for i in range(nx):
            e = i + nx * j
            if i + 1 < nx:
                interior.append((e, 1, e + 1, 3))
            if j + 1 < ny:
                interior.append((e, 2, e + nx, 0))
            if j == 0:
                boundary.append((e, 0, -1))
            if i == nx - 1:
                boundary.append((e, 1, -1))
            if j == ny - 1:
                boundary.append((e, 2, -1))
            if i == 0:
                boundary.append((e, 3, -1))
    return Mesh(k, coords, np.array(interior).reshape(-1, 4), np.array(boundary).reshape(-1, 3))


def rectangle_mesh(nx: int, ny: int, k: int, x0=0.0, y0=0.0, x1=1.0, y1=1.0):
    """Uniform mesh of a rectangle; returns ``(mesh, geometry)`` with faces tagged."""
    g = geo.rectangle(x0, y0, x1, y1)
    m = mapped_mesh(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1), k)
    return assign_boundary_tags(m, g), g


def unit_square_mesh(n: int, k: int):
    return rectangle_mesh(n, n, k)


def tensor_mesh(xs, ys, k: int):
    """Rectangle mesh with arbitrary (e.g. graded) breakpoints."""
    g = geo.rectangle(xs[0], ys[0], xs[-1], ys[-1])
    return assign_boundary_tags(mapped_mesh(xs, ys, k), g), g


def channel_mesh(nx: int, ny: int, k: int, length=3.0, height=1.0, bump=0.04):
    """Channel with a circular bump on its middle third; ``nx`` must be a multiple of 3."""
    if nx % 3:
        raise ValueError("nx must be a multiple of 3 so element edges meet the bump ends")
    g = geo.bump_channel(length, height, bump)
    arc = g.segments[1]
    cx, cy = arc.center
    a, b = length / 3.0, 2.0 * length / 3.0

    def floor(x):
        inside = (x > a) & (x < b)
        y = np.zeros_like(x)
        y[inside] = cy + np.sqrt(arc.radius**2 - (x[inside] - cx) ** 2)
        return y

    def mapping(X, Y):
        yb = floor(X)
        return X, yb + Y * (height - yb)

    m = mapped_mesh(np.linspace(0.0, length, nx + 1), np.linspace(0.0, 1.0, ny + 1), k, mapping)
    return assign_boundary_tags(m, g), g


def double_ramp_mesh(n_per_unit: int, ny: int, k: int, **kw):
    """Double-ramp mesh with element columns breaking exactly at the ramp corners."""
    g = geo.double_ramp(**kw)
    height = {**geo.DOUBLE_RAMP, **kw}["height"]
    xb, yb = geo.double_ramp_profile(**kw)
    xs = [0.0]
    for a, b in zip(xb[:-1], xb[1:]):
        n = max(1, int(round(n_per_unit * (b - a))))
        xs.extend(np.linspace(a, b, n + 1)[1:])
    xs = np.array(xs)

    def mapping(X, Y):
        floor = np.interp(X, xb, yb)
        return X, floor + Y * (height - floor)

    m = mapped_mesh(xs, np.linspace(0.0, 1.0, ny + 1), k, mapping)
    return assign_boundary_tags(m, g), g
