"""Mesh density functions: shock sensors, indicator ``b``, Helmholtz smoothing, point evaluation."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import fields, helmholtz
from .fields import ScalarFieldDG, StateFieldDG
from .mesh import Mesh, h_min

log = logging.getLogger(__name__)

VELOCITY_DIVERGENCE = "velocity_divergence"
DENSITY_GRADIENT = "density_gradient"


class NonPositiveDensityFunction(ValueError):
    """The mesh density function is not strictly positive somewhere."""


class DegenerateField(UserWarning):
    """A sensor field is identically zero, so its clip level is undefined."""


@dataclass
class MonitorConfig:
    option: str = VELOCITY_DIVERGENCE
    beta: float = 1.0
    s_max_factor: float = 0.5
    smoothing: bool = True
    length_scale: float | None = None  # None: h_min of the current mesh
    g_sharpness: float = 100.0

    def __post_init__(self):
        if self.option not in (VELOCITY_DIVERGENCE, DENSITY_GRADIENT):
            raise ValueError(f"unknown indicator option {self.option!r}")
        if self.beta < 0.0:
            raise ValueError("beta must be non-negative")
        if not 0.0 < self.s_max_factor <= 1.0:
            raise ValueError("s_max_factor must lie in (0, 1]")


def _ramp(z, sharpness):
    return z * (np.arctan(sharpness * z) / np.pi + 0.5)


def clip_g(s, s_max: float, sharpness: float = 100.0):
    """Smooth clip of ``s`` to ``[0, s_max]``: difference of two arctan ramps."""
    if not s_max > 0.0:
        raise ValueError("s_max must be positive")
    s = np.asarray(s, dtype=float)
    return _ramp(s, sharpness) - _ramp(s - s_max, sharpness)


def _clipped(values: np.ndarray, config: MonitorConfig, name: str) -> np.ndarray:
    norm = float(np.max(np.abs(values)))
    if norm == 0.0:
        warnings.warn(f"{name} is identically zero; returning a zero source", DegenerateField, stacklevel=3)
        return np.zeros_like(values)
    return clip_g(values, config.s_max_factor * norm, config.g_sharpness)


def source_s(state: StateFieldDG, config: MonitorConfig | None = None) -> ScalarFieldDG:
    """Clipped shock strength ``g(-div v)`` with ``s_max = factor * max|S|`` over the nodes."""
    config = config or MonitorConfig()
    strength = fields.shock_strength(state)
    return ScalarFieldDG(state.mesh, _clipped(strength.coeffs, config, "shock strength"))


def indicator_b(state: StateFieldDG, config: MonitorConfig) -> ScalarFieldDG:
    """Resolution indicator ``sqrt(1 + beta * sensor)``."""
    if config.option == VELOCITY_DIVERGENCE:
        sensor = source_s(state, config).coeffs
    else:
        grad = fields.nodal_gradient(state.mesh, state.coeffs[..., 0])
        sensor = _clipped(np.hypot(grad[..., 0], grad[..., 1]), config, "density gradient")
    # the smooth clip undershoots zero by O(1e-8); keep b real and >= 1
    return ScalarFieldDG(state.mesh, np.sqrt(1.0 + config.beta * np.maximum(sensor, 0.0)))


class DensityEvaluator:
    """Target density ``rho'`` with normalisation ``theta``; evaluation clamps outside the mesh."""

    def __init__(self, field: ScalarFieldDG, theta: float):
        self.field = field
        self.mesh = field.mesh
        self.theta = float(theta)
        self.clamp_count = 0
        self.eval_count = 0

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)[0]

    def evaluate(self, x, gradient: bool = False):
        """Values (and gradients) at points ``(P, 2)``; returns ``(value, grad or None, clamped)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        mesh = self.mesh
        lo, hi = mesh.bbox
        # iterates may leave the domain: pull far points back inside the locator's box
        xc = np.clip(x, lo, hi)
        e, xi, extrap = mesh.locate_points(xc)
        extrap = extrap | np.any(xc != x, axis=1)
        self.clamp_count += int(extrap.sum())
        self.eval_count += len(x)
        if not gradient:
            phi = mesh.master.eval_basis(xi)
            return np.einsum("pj,pj->p", phi, self.field.coeffs[e]), None, extrap
        phi, dphi = mesh.master.eval_basis(xi, derivative=True)
        val = np.einsum("pj,pj->p", phi, self.field.coeffs[e])
        jac = np.einsum("prj,pjd->pdr", dphi, mesh.coords[e])
        jinv = np.linalg.inv(jac)
        grad = np.einsum("prd,prj,pj->pd", jinv, dphi, self.field.coeffs[e])
        return val, grad, extrap

    def diagnostics(self) -> dict:
        c = self.field.coeffs
        return dict(theta=self.theta, min=float(c.min()), max=float(c.max()), clamp_count=self.clamp_count)


class AnalyticDensity:
    """Density given by a vectorised callable ``fn(x, y)``; ``theta`` by high-order quadrature if omitted."""

    def __init__(self, fn, mesh: Mesh, theta: float | None = None, quad_order: int = 24):
        self.fn = fn
        self.mesh = mesh
        self.clamp_count = 0
        self.eval_count = 0
        self.theta = float(theta) if theta is not None else self._mean(quad_order)

    def _mean(self, order: int) -> float:
        # subdivide each element with a tensor Gauss rule, exact geometry via the isoparametric map
        gx, gw = np.polynomial.legendre.leggauss(order)
        xi = np.array([(a, b) for b in gx for a in gx])
        w = np.outer(gw, gw).ravel()
        me = self.mesh.master
        phi, dphi = me.eval_basis(xi, derivative=True)
        pts = np.einsum("qj,ejd->eqd", phi, self.mesh.coords)
        jac = np.einsum("qrj,ejd->eqdr", dphi, self.mesh.coords)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        vals = self.fn(pts[..., 0], pts[..., 1])
        return float(np.sum(vals * det * w) / np.sum(det * w))

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)[0]

    def evaluate(self, x, gradient: bool = False):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self.eval_count += len(x)
        val = np.asarray(self.fn(x[:, 0], x[:, 1]), dtype=float) * np.ones(len(x))
        grad = None
        if gradient:
            h = 1e-6 * max(self.mesh.diameter, 1.0)
            gx = (self.fn(x[:, 0] + h, x[:, 1]) - self.fn(x[:, 0] - h, x[:, 1])) / (2 * h)
            gy = (self.fn(x[:, 0], x[:, 1] + h) - self.fn(x[:, 0], x[:, 1] - h)) / (2 * h)
            grad = np.stack([gx * np.ones(len(x)), gy * np.ones(len(x))], axis=1)
        return val, grad, np.zeros(len(x), dtype=bool)

    def diagnostics(self) -> dict:
        return dict(theta=self.theta, clamp_count=0)


def smooth_density(b: ScalarFieldDG, length_scale: float | None = None, smoothing: bool = True) -> DensityEvaluator:
    """Helmholtz-smooth an indicator into a density evaluator (all-Neumann boundary)."""
    mesh = b.mesh
    if smoothing:
        ell = h_min(mesh) if length_scale is None else length_scale
        rho = helmholtz.solve(helmholtz.HelmholtzProblem(mesh, ell**2, b))
    else:
        rho = b
    g = mesh.volume_geometry
    rq = rho.at_quad()
    if rq.min() <= 0.0 or rho.coeffs.min() <= 0.0:
        idx = np.unravel_index(np.argmin(rq), rq.shape)
        raise NonPositiveDensityFunction(
            f"mesh density {rq[idx]:.3e} at {g.points[idx].tolist()} (element {idx[0]}) is not positive"
        )
    theta = rho.integrate() / mesh.area
    return DensityEvaluator(rho, theta)


def build_density(mesh: Mesh, state: StateFieldDG, config: MonitorConfig) -> DensityEvaluator:
    b = indicator_b(state, config)
    dens = smooth_density(b, config.length_scale, config.smoothing)
    dens.indicator = b
    log.info("density: theta=%.6g, b in [%.4g, %.4g]", dens.theta, b.coeffs.min(), b.coeffs.max())
    return dens


def eval_density(dens, x):
    """Value and gradient of the density at points ``x``."""
    val, grad, _ = dens.evaluate(x, gradient=True)
    return val, grad
