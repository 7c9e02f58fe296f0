"""Artificial-viscosity support: ramp, AV field, shock set, constraints, and homotopy on (lambda1, lambda2)."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import fields, helmholtz
from .fields import ScalarFieldDG, StateFieldDG
from .mesh import Mesh, h_min
from .monitor import DegenerateField, MonitorConfig, source_s

log = logging.getLogger(__name__)

ETA_T = 0.2
ZETA = 0.8
C0 = 5.0
RAMP_SHARPNESS = 100.0
SIGMA_ROUNDOFF = 1e-12  # sigma of an exactly smooth field is round-off, not zero


def mu_ramp(eta_bar, eta_t: float = ETA_T):
    """Smooth ramp that vanishes for ``eta_bar <= eta_t`` and reaches ``1 - eta_t`` at 1."""
    z = np.asarray(eta_bar, dtype=float) - eta_t
    out = z * (np.arctan(RAMP_SHARPNESS * z) / np.pi + 0.5) - np.arctan(RAMP_SHARPNESS) / np.pi + 0.5
    return float(out) if out.ndim == 0 else out


def normalized(eta: ScalarFieldDG) -> np.ndarray | None:
    """Nodal ``eta / max|eta|``, or None for an identically zero field."""
    m = eta.max_abs()
    return None if m == 0.0 else eta.coeffs / m


def av_field(eta: ScalarFieldDG, lam1: float, eta_t: float = ETA_T) -> ScalarFieldDG:
    """Artificial viscosity ``lam1 * mu(eta_bar)`` at the nodes."""
    eb = normalized(eta)
    if eb is None:
        warnings.warn("eta is identically zero; artificial viscosity set to zero", DegenerateField, stacklevel=2)
        return ScalarFieldDG(eta.mesh, np.zeros_like(eta.coeffs))
    return ScalarFieldDG(eta.mesh, lam1 * mu_ramp(eb, eta_t))


def shock_elements(mesh: Mesh, eta: ScalarFieldDG, eta_t: float = ETA_T) -> np.ndarray:
    """Sorted indices of elements with ``int_K eta_bar >= eta_t |K|``."""
    eb = normalized(eta)
    if eb is None:
        return np.zeros(0, dtype=int)
    g = mesh.volume_geometry
    integral = np.sum((eb @ mesh.master.basis_at_quad.T) * g.wdet, axis=1)
    return np.flatnonzero(integral >= eta_t * mesh.element_areas)


@dataclass(frozen=True)
class HomotopyState:
    n: int = 0
    lam1: float = 1.0
    lam2: float = 1.5
    zeta: float = ZETA
    lam0: tuple = (1.0, 1.5)
    sigma0: float | None = None
    c0: float = C0

    def __post_init__(self):
        if not self.lam1 > 0.0:
            raise ValueError("lambda1 must be positive")
        if self.lam2 < 1.0:
            raise ValueError("lambda2 must be at least 1")
        if not 0.0 < self.zeta <= 1.0:
            raise ValueError("zeta must lie in (0, 1]")
        if not self.c0 > 0.0:
            raise ValueError("C0 must be positive")

    @classmethod
    def initial(cls, lam0=(1.0, 1.5), zeta: float = ZETA, c0: float = C0) -> "HomotopyState":
        return cls(0, float(lam0[0]), float(lam0[1]), zeta, (float(lam0[0]), float(lam0[1])), None, c0)


def homotopy_step(state: HomotopyState) -> HomotopyState:
    """Advance to ``n + 1``: ``lam1 <- zeta^n lam1`` and ``lam2 <- 1 + zeta^n (lam2 - 1)``."""
    f = state.zeta**state.n
    return replace(state, n=state.n + 1, lam1=f * state.lam1, lam2=1.0 + f * (state.lam2 - 1.0))


@dataclass
class Verdict:
    passed: bool
    reason: str = ""
    element: int | None = None
    value: float | None = None
    sigma: float | None = None

    def __bool__(self):
        return self.passed

    def to_dict(self) -> dict:
        return dict(passed=self.passed, reason=self.reason, element=self.element, value=self.value, sigma=self.sigma)


def smoothness_variable(state: StateFieldDG, choice: str = "density") -> ScalarFieldDG:
    if choice not in ("density", "pressure", "mach"):
        raise ValueError(f"unknown smoothness variable {choice!r}")
    return fields.derived(state, choice)


def check_constraints(state: StateFieldDG, eta: ScalarFieldDG | None, sigma0: float, c0: float = C0,
                      xi_choice: str = "density", eta_t: float = ETA_T) -> Verdict:
    """Positivity of density and pressure (nodes and quadrature points), then ``sigma <= C0 sigma0``."""
    mesh = state.mesh
    phi = mesh.master.basis_at_quad
    cq = np.einsum("qi,eic->eqc", phi, state.coeffs)
    for name, nodal, quad in (
        ("density", state.coeffs[..., 0], cq[..., 0]),
        ("pressure", fields.pressure_array(state.coeffs, state.gamma), fields.pressure_array(cq, state.gamma)),
    ):
        worst = np.minimum(nodal.min(axis=1), quad.min(axis=1))
        bad = np.flatnonzero(~(worst > 0.0))
        if bad.size:
            e = int(bad[0])
            return Verdict(False, f"{name} <= 0", e, float(worst[e]))
    shock = np.arange(mesh.n_elements) if eta is None else shock_elements(mesh, eta, eta_t)
    sigma, sigma_k = fields.sigma_smoothness(smoothness_variable(state, xi_choice), shock)
    if sigma > c0 * sigma0 + SIGMA_ROUNDOFF:
        e = int(shock[np.argmax(sigma_k[shock])])
        return Verdict(False, "smoothness", e, sigma, sigma)
    return Verdict(True, sigma=sigma)


def eta_solve(mesh: Mesh, state: StateFieldDG, lam2: float, ell: float | None = None, wall_tags=(),
              monitor: MonitorConfig | None = None) -> ScalarFieldDG:
    """Viscosity-shape field from ``eta - lam2^2 ell^2 lap eta = s``, zero on walls, Neumann elsewhere."""
    ell = h_min(mesh) if ell is None else ell
    s = source_s(state, monitor)
    bc = {int(t): helmholtz.DIRICHLET0 for t in wall_tags}
    return helmholtz.solve(helmholtz.HelmholtzProblem(mesh, lam2**2 * ell**2, s, bc))


def initial_eta(mesh: Mesh, geometry=None, wall_tags=(), ell: float | None = None) -> ScalarFieldDG:
    """``1 - exp(-d^2 / (2 ell)^2)`` with ``d`` the distance to the walls; 1 without walls."""
    if geometry is None or not len(wall_tags):
        return ScalarFieldDG.constant(mesh, 1.0)
    ell = h_min(mesh) if ell is None else ell
    pts = mesh.coords.reshape(-1, 2)
    d = np.full(len(pts), np.inf)
    for t in wall_tags:
        p = geometry.segments[int(t)].project(pts)
        d = np.minimum(d, np.hypot(*(p - pts).T))
    eta = 1.0 - np.exp(-(d**2) / (2.0 * ell) ** 2)
    return ScalarFieldDG(mesh, eta.reshape(mesh.coords.shape[:2]))


@dataclass
class HomotopyResult:
    accepted: HomotopyState
    state: StateFieldDG
    eta: ScalarFieldDG
    trace: list = field(default_factory=list)
    stopped_by: str = ""

    def to_dict(self) -> dict:
        return dict(
            accepted_n=self.accepted.n,
            lam1=self.accepted.lam1,
            lam2=self.accepted.lam2,
            sigma0=self.accepted.sigma0,
            stopped_by=self.stopped_by,
            trace=self.trace,
        )


def run_homotopy(provider, mesh: Mesh, lam0=(1.0, 1.5), zeta: float = ZETA, c0: float = C0, eta_t: float = ETA_T,
                 xi_choice: str = "density", max_steps: int = 20, geometry=None, wall_tags=(),
                 ell: float | None = None, monitor: MonitorConfig | None = None) -> HomotopyResult:
    """Drive the continuation over externally supplied states.

    ``provider(n, lam1, lam2, eta)`` returns the state solved with those
    parameters.  The first step uses ``lam0`` and the wall-damped initial
    ``eta``; each later step rebuilds ``eta`` from the previous state.  The
    loop stops at the first constraint violation and returns the last state
    that satisfied every constraint.  The smoothness baseline ``sigma0`` is
    measured on the shock set of the ``eta`` built from the first state.
    """
    hs = HomotopyState.initial(lam0, zeta, c0)
    eta0 = initial_eta(mesh, geometry, wall_tags, ell)
    u0 = provider(0, hs.lam1, hs.lam2, eta0)
    pos = check_constraints(u0, None, np.inf, c0, xi_choice, eta_t)
    if not pos.passed:
        raise ValueError(f"initial state violates {pos.reason} in element {pos.element}")
    eta_next = eta_solve(mesh, u0, hs.lam2, ell, wall_tags, monitor)
    sigma0, _ = fields.sigma_smoothness(smoothness_variable(u0, xi_choice), shock_elements(mesh, eta_next, eta_t))
    hs = replace(hs, sigma0=sigma0)
    trace = [dict(n=0, lam1=hs.lam1, lam2=hs.lam2, verdict=Verdict(True, sigma=sigma0).to_dict())]
    accepted, state, eta = hs, u0, eta0
    stopped = "max_steps"
    for _ in range(max_steps):
        hs = homotopy_step(hs)
        eta_n = eta_solve(mesh, state, hs.lam2, ell, wall_tags, monitor)
        u_n = provider(hs.n, hs.lam1, hs.lam2, eta_n)
        verdict = check_constraints(u_n, eta_n, sigma0, c0, xi_choice, eta_t)
        trace.append(dict(n=hs.n, lam1=hs.lam1, lam2=hs.lam2, verdict=verdict.to_dict()))
        log.info("homotopy n=%d lam=(%.4g, %.4g): %s", hs.n, hs.lam1, hs.lam2, verdict.reason or "pass")
        if not verdict.passed:
            stopped = verdict.reason
            break
        accepted, state, eta = hs, u_n, eta_n
    return HomotopyResult(accepted, state, eta, trace, stopped)
