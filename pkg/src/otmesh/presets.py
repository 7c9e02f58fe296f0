"""Analytic flow states and target densities used by tests, demos and the driver."""

from __future__ import annotations

import numpy as np

from .fields import GAMMA

# Normal shock relations for the tanh preset
MACH = 1.4


def normal_shock_ratios(mach: float, gamma: float = GAMMA) -> tuple[float, float]:
    """Density and pressure jumps across a normal shock."""
    m2 = mach * mach
    rho = (gamma + 1.0) * m2 / ((gamma - 1.0) * m2 + 2.0)
    p = 1.0 + 2.0 * gamma / (gamma + 1.0) * (m2 - 1.0)
    return rho, p


def uniform_state(mach: float = MACH, gamma: float = GAMMA):
    """Free stream ``rho = 1``, ``v = (1, 0)``, ``p = 1 / (gamma M^2)``."""
    p0 = 1.0 / (gamma * mach**2)

    def fn(x, y):
        one = np.ones_like(np.asarray(x, dtype=float))
        return one, one, 0.0 * one, p0 * one

    return fn


def tanh_shock_state(x0: float = 0.5, width: float = 0.02, mach: float = MACH, gamma: float = GAMMA, angle_deg: float = 0.0):
    """Smeared normal shock across the line through ``(x0, *)`` rotated by ``angle_deg``.

    Upstream values are the free stream; downstream density and pressure
    follow the normal-shock jumps and the normal velocity follows mass
    conservation, so ``-div v > 0`` inside the layer.
    """
    rr, pr = normal_shock_ratios(mach, gamma)
    p0 = 1.0 / (gamma * mach**2)
    a = np.deg2rad(angle_deg)
    nx, ny = np.cos(a), np.sin(a)

    def fn(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = (x - x0) * nx + (y - 0.5) * ny
        s = 0.5 * (1.0 + np.tanh(d / width))
        rho = 1.0 + (rr - 1.0) * s
        vn = 1.0 / rho  # rho * vn constant
        return rho, vn * nx, vn * ny, p0 * (1.0 + (pr - 1.0) * s)

    return fn


def oblique_shock_state(x0: float = 0.5, width: float = 0.02, angle_deg: float = 30.0, **kw):
    return tanh_shock_state(x0=x0, width=width, angle_deg=angle_deg, **kw)


def ring_state(center=(0.5, 0.5), radius: float = 0.25, width: float = 0.02, gamma: float = GAMMA):
    """Radially compressive layer: density rises across the circle ``|x - c| = radius``."""
    cx, cy = center
    p0 = 1.0 / (gamma * MACH**2)

    def fn(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.hypot(x - cx, y - cy)
        s = 0.5 * (1.0 - np.tanh((r - radius) / width))
        rho = 1.0 + s
        # inward velocity decelerating across the ring
        vr = -(1.0 - 0.5 * s) * np.minimum(r / radius, 1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            ux = np.where(r > 0, (x - cx) / r, 0.0)
            uy = np.where(r > 0, (y - cy) / r, 0.0)
        return rho, vr * ux, vr * uy, p0 * (1.0 + s)

    return fn


STATES = {
    "uniform": uniform_state,
    "tanh-shock": tanh_shock_state,
    "ring": ring_state,
    "oblique-shock": oblique_shock_state,
}


def gaussian_ring_density(center=(0.5, 0.5), radius: float = 0.25, width: float = 0.1, amplitude: float = 9.0):
    """``1 + A exp(-(|x - c| - r)^2 / w^2)``."""
    cx, cy = center

    def fn(x, y):
        r = np.hypot(np.asarray(x) - cx, np.asarray(y) - cy)
        return 1.0 + amplitude * np.exp(-((r - radius) ** 2) / width**2)

    return fn


def oblique_band_density(point=(1.5, 0.5), direction=(1.0, 1.0), width: float = 0.15, amplitude: float = 4.0):
    """Gaussian band along a line; a stand-in for an oblique shock."""
    d = np.asarray(direction, dtype=float)
    d = d / np.hypot(*d)
    nx, ny = -d[1], d[0]
    px, py = point

    def fn(x, y):
        dist = (np.asarray(x) - px) * nx + (np.asarray(y) - py) * ny
        return 1.0 + amplitude * np.exp(-(dist**2) / width**2)

    return fn


class PerturbedQuadratic:
    """Manufactured map ``u = |x|^2/2 + eps cos(pi x) cos(pi y) / pi^2`` on the unit square.

    With source density 1 the matching target density is
    ``1 / det D^2 u`` composed with the inverse of ``grad u``.
    """

    def __init__(self, eps: float = 0.05):
        if not 0.0 <= eps < 0.5:
            raise ValueError("eps must lie in [0, 0.5) for a convex potential")
        self.eps = eps

    def u(self, x, y):
        return 0.5 * (x**2 + y**2) + self.eps * np.cos(np.pi * x) * np.cos(np.pi * y) / np.pi**2

    def grad(self, x, y):
        e = self.eps / np.pi
        return np.stack([x - e * np.sin(np.pi * x) * np.cos(np.pi * y), y - e * np.cos(np.pi * x) * np.sin(np.pi * y)], -1)

    def hessian(self, x, y):
        e = self.eps
        cc = np.cos(np.pi * x) * np.cos(np.pi * y)
        ss = np.sin(np.pi * x) * np.sin(np.pi * y)
        H = np.empty(np.shape(x) + (2, 2))
        H[..., 0, 0] = 1.0 - e * cc
        H[..., 1, 1] = 1.0 - e * cc
        H[..., 0, 1] = H[..., 1, 0] = e * ss
        return H

    def inverse_map(self, xp, yp, tol: float = 1e-14, maxit: int = 50):
        """Solve ``grad u(x) = x'`` by Newton's method, vectorised."""
        target = np.stack([np.asarray(xp, dtype=float), np.asarray(yp, dtype=float)], -1)
        z = target.copy()
        for _ in range(maxit):
            r = self.grad(z[..., 0], z[..., 1]) - target
            if np.max(np.abs(r), initial=0.0) < tol:
                break
            z = z - np.linalg.solve(self.hessian(z[..., 0], z[..., 1]), r[..., None])[..., 0]
        return z

    def density(self, xp, yp):
        z = self.inverse_map(xp, yp)
        H = self.hessian(z[..., 0], z[..., 1])
        return 1.0 / np.linalg.det(H)
