"""Adaptation loop: density from the state, Monge-Ampere map, new mesh, transfer, repeat.

The flow re-solve on each adapted mesh is replaced by re-sampling an analytic
state preset, or by interpolating a stored state from the original mesh; the
report records which substitution was used.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fields, generators, io, presets
from . import geometry as geo
from . import monge_ampere as ma
from . import shock_reg
from .config import AdaptConfig
from .fields import ScalarFieldDG, StateFieldDG
from .mesh import Mesh, validate
from .monitor import AnalyticDensity, build_density

log = logging.getLogger(__name__)

REPORT_SCHEMA = 1


class StepError(RuntimeError):
    """A module error raised inside the adaptation loop, tagged with where it happened."""

    def __init__(self, iteration: int, step: str, cause: Exception):
        super().__init__(f"iteration {iteration}, step '{step}': {type(cause).__name__}: {cause}")
        self.iteration = iteration
        self.step = step
        self.cause = cause


class _Step:
    def __init__(self, iteration, name):
        self.iteration, self.name = iteration, name

    def __enter__(self):
        return self

    def __exit__(self, et, ev, tb):
        if ev is not None and not isinstance(ev, StepError) and isinstance(ev, Exception):
            raise StepError(self.iteration, self.name, ev) from ev
        return False


@dataclass
class RunReport:
    config: dict
    iterations: list = field(default_factory=list)
    substitution: str = ""
    outputs: list = field(default_factory=list)
    converged: bool = False
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)
    final_mesh: Mesh | None = field(default=None, repr=False)
    final_state: StateFieldDG | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return dict(
            schema=REPORT_SCHEMA,
            config=self.config,
            substitution=self.substitution,
            converged=self.converged,
            seconds=self.seconds,
            iterations=self.iterations,
            outputs=self.outputs,
            **self.extra,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(_jsonable(self.to_dict()), indent=2) + "\n", encoding="utf-8")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        return float(v) if np.isfinite(v) else str(float(v))
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


# -- inputs ---------------------------------------------------------------------


def build_geometry(spec) -> geo.BoundaryGeometry | None:
    if spec.segments:
        return geo.BoundaryGeometry([geo.parse_segment(r) for r in spec.segments])
    name = spec.geometry or (spec.generator if spec.path is None else None)
    if name is None:
        return None
    if name not in geo.PRESETS:
        raise ValueError(f"unknown geometry preset {name!r}; choose from {sorted(geo.PRESETS)}")
    return geo.PRESETS[name]()


def build_mesh(spec) -> tuple[Mesh, geo.BoundaryGeometry]:
    """Initial mesh and boundary geometry from a file or a generator."""
    if spec.path is not None:
        if not Path(spec.path).is_file():
            raise FileNotFoundError(f"mesh file not found: {spec.path}")
        mesh = io.load_mesh(spec.path)
        g = build_geometry(spec)
        if g is None:
            raise ValueError("a mesh file needs a geometry preset or explicit segments")
        return mesh, g
    nx = spec.nx or spec.n
    ny = spec.ny or spec.n
    if spec.generator == "unit_square":
        return generators.rectangle_mesh(nx, ny, spec.k)
    if spec.generator == "rectangle":
        return generators.rectangle_mesh(nx, ny, spec.k)
    if spec.generator == "channel":
        return generators.channel_mesh(3 * nx, ny, spec.k)
    if spec.generator == "double_ramp":
        return generators.double_ramp_mesh(nx, ny, spec.k)
    raise ValueError(f"unknown mesh generator {spec.generator!r}")


def state_function(spec):
    """Analytic primitive-variable function for a state preset."""
    if spec.preset not in presets.STATES:
        raise ValueError(f"unknown state preset {spec.preset!r}; choose from {sorted(presets.STATES)}")
    return presets.STATES[spec.preset](**spec.params)


def load_state(spec, mesh: Mesh) -> StateFieldDG:
    if spec.path is not None:
        if not Path(spec.path).is_file():
            raise FileNotFoundError(f"state file not found: {spec.path}")
        k, vals = io.load_field_array(spec.path)
        if k != mesh.k or vals.shape[:2] != mesh.coords.shape[:2] or vals.shape[2] != 4:
            raise ValueError(
                f"state file {spec.path} has k={k}, shape {vals.shape}; mesh needs k={mesh.k}, "
                f"shape {mesh.coords.shape[:2] + (4,)}"
            )
        return StateFieldDG(mesh, vals)
    return StateFieldDG.from_primitive(mesh, state_function(spec))


def target_density(spec, mesh: Mesh) -> AnalyticDensity:
    """Analytic target density for the density-only solve mode."""
    p = dict(spec.params)
    if spec.preset == "uniform":
        return AnalyticDensity(lambda x, y: np.ones_like(np.asarray(x, dtype=float)), mesh, theta=1.0)
    if spec.preset == "gaussian-ring":
        if "cx" in p or "cy" in p:
            p["center"] = (p.pop("cx", 0.5), p.pop("cy", 0.5))
        return AnalyticDensity(presets.gaussian_ring_density(**p), mesh)
    if spec.preset == "oblique-band":
        if "px" in p or "py" in p:
            p["point"] = (p.pop("px", 1.5), p.pop("py", 0.5))
        if "angle" in p:
            a = np.radians(p.pop("angle"))
            p["direction"] = (np.cos(a), np.sin(a))
        return AnalyticDensity(presets.oblique_band_density(**p), mesh)
    if spec.preset == "manufactured":
        return AnalyticDensity(presets.PerturbedQuadratic(**p).density, mesh, theta=1.0)
    raise ValueError(f"unknown density preset {spec.preset!r}")


# -- diagnostics ----------------------------------------------------------------


def relative_l2_change(new: ScalarFieldDG, old: ScalarFieldDG) -> float:
    """``|new - old| / |new|`` in L2 on the mesh of ``new`` (``old`` must live on the same mesh)."""
    w = new.mesh.volume_geometry.wdet
    num = np.sqrt(np.sum(ScalarFieldDG(new.mesh, new.coeffs - old.coeffs).at_quad() ** 2 * w))
    den = np.sqrt(np.sum(new.at_quad() ** 2 * w))
    return float(num / max(den, 1e-300))


def element_extent(mesh: Mesh, axis: int = 0) -> np.ndarray:
    """Extent of each element's nodes along a coordinate axis."""
    c = mesh.coords[..., axis]
    return c.max(axis=1) - c.min(axis=1)


def interface_size_ratio(initial: Mesh, adapted: Mesh, x0: float = 0.5, samples: int = 64) -> float:
    """Mean width (along x) of the elements crossing the line ``x = x0``, initial over adapted."""
    lo, hi = initial.bbox
    ys = np.linspace(lo[1], hi[1], samples + 2)[1:-1]
    pts = np.stack([np.full_like(ys, x0), ys], axis=1)
    w0 = element_extent(initial)[initial.locate_points(pts)[0]]
    w1 = element_extent(adapted)[adapted.locate_points(pts)[0]]
    return float(w0.mean() / w1.mean())


# -- runs -----------------------------------------------------------------------


def run_adaptation(config: AdaptConfig, write: bool = True) -> RunReport:
    """Run the adaptation loop; writes adapted meshes, density fields and ``report.json``."""
    t0 = time.perf_counter()
    # resolve all inputs before touching the output directory
    with _Step(0, "load_mesh"):
        mesh0, geometry = build_mesh(config.mesh)
    with _Step(0, "load_state"):
        state = load_state(config.state, mesh0)
        fn = None if config.state.path is not None else state_function(config.state)
    out = Path(config.output.directory)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    report = RunReport(config.to_dict())
    report.substitution = (
        "flow re-solve replaced by re-sampling the analytic state preset on each adapted mesh"
        if fn is not None
        else "flow re-solve replaced by interpolating the stored state from the initial mesh"
    )
    xi = config.homotopy.xi_choice
    mesh, original = mesh0, state
    for i in range(1, config.max_adapt + 1):
        ti = time.perf_counter()
        with _Step(i, "build_density"):
            density = build_density(mesh, state, config.monitor)
        with _Step(i, "fixed_point_solve"):
            sol = ma.fixed_point_solve(mesh, geometry, density, params=config.ma)
        with _Step(i, "extract_adapted_mesh"):
            new = ma.extract_adapted_mesh(mesh, sol, geometry)
            spread = new.duplicate_spread
        with _Step(i, "corner_fix"):
            new = ma.corner_fix(new, geometry)
            rep = validate(new)
            if not rep.ok:
                raise ma.InvalidAdaptedMesh(f"corner fix tangled element {rep.invalid[0]}", rep.invalid)
        with _Step(i, "interpolate_onto"):
            carried = fields.interpolate_onto(state, new)
            new_state = StateFieldDG.from_primitive(new, fn) if fn is not None else fields.interpolate_onto(original, new)
            change = relative_l2_change(
                shock_reg.smoothness_variable(new_state, xi), shock_reg.smoothness_variable(carried, xi)
            )
        move = float(np.max(np.hypot(*(new.coords - mesh.coords).reshape(-1, 2).T)) / mesh.diameter)
        rec = dict(
            iteration=i,
            theta=density.theta,
            ma_iterations=sol.iterations,
            ma_converged=sol.converged,
            ma_final_change=sol.diagnostics["final_change"],
            ma_residual=sol.diagnostics["ma_residual"],
            min_det_H=sol.diagnostics["min_det_H"],
            max_bc_residual=sol.diagnostics["max_bc_residual"],
            max_abs_c=sol.diagnostics["max_abs_c"],
            min_det_J=validate(new).min_det,
            clamp_count=density.clamp_count,
            duplicate_spread=spread,
            max_node_move=move,
            state_change=change,
            seconds=time.perf_counter() - ti,
        )
        if write:
            mpath = out / f"adapted_{i:03d}.otm"
            dpath = out / f"density_{i:03d}.otf"
            io.save_mesh(new, mpath)
            report.outputs.append(str(mpath))
            if config.output.write_density:
                io.save_field_array(density.field.coeffs, mesh.k, dpath)
                report.outputs.append(str(dpath))
            if config.output.vtk:
                vpath = out / f"adapted_{i:03d}.vtk"
                io.write_vtk(new, vpath, {"density": new_state.coeffs[..., 0], "state": new_state.coeffs})
                report.outputs.append(str(vpath))
        report.iterations.append(rec)
        log.info("adapt %d: MA %d its, state change %.3e", i, sol.iterations, change)
        mesh, state = new, new_state
        if change <= config.tol_adapt:
            report.converged = True
            break
    if config.homotopy.enabled:
        with _Step(len(report.iterations), "artificial_viscosity"):
            report.extra["viscosity"] = viscosity_diagnostics(config, mesh, geometry, state, out if write else None, report)
    report.seconds = time.perf_counter() - t0
    report.extra["initial_mesh"] = dict(n_elements=mesh0.n_elements, k=mesh0.k)
    report.final_mesh, report.final_state = mesh, state
    if write:
        report.outputs.append(str(out / "report.json"))
        report.save(out / "report.json")
    return report


def viscosity_diagnostics(config: AdaptConfig, mesh: Mesh, geometry, state: StateFieldDG, out, report) -> dict:
    """Initial AV field, shock set and constraint verdict for the final state."""
    h = config.homotopy
    wall = config.mesh.wall_tags
    eta = shock_reg.eta_solve(mesh, state, h.lam2, None, wall, config.monitor)
    av = shock_reg.av_field(eta, h.lam1, h.eta_t)
    shock = shock_reg.shock_elements(mesh, eta, h.eta_t)
    sigma0, _ = fields.sigma_smoothness(shock_reg.smoothness_variable(state, h.xi_choice), shock)
    verdict = shock_reg.check_constraints(state, eta, sigma0, h.c0, h.xi_choice, h.eta_t)
    if out is not None:
        for name, f in (("eta", eta), ("av", av)):
            p = Path(out) / f"{name}.otf"
            io.save_field_array(f.coeffs, mesh.k, p)
            report.outputs.append(str(p))
    return dict(shock_elements=len(shock), sigma=sigma0, av_max=av.max_abs(), verdict=verdict.to_dict())


def boundary_diagnostics(mesh: Mesh, geometry) -> dict:
    """Distance of boundary nodes to the geometry and of each corner to the nearest vertex."""
    bnd = mesh.coords[mesh.boundary_node_mask]
    verts = mesh.coords[:, mesh.master.vertex_nodes].reshape(-1, 2)
    corner = [float(np.hypot(*(verts - c).T).min()) for c in geometry.corners]
    return dict(
        max_boundary_distance=float(geometry.distance(bnd).max()),
        diameter=geometry.diameter,
        corner_distances=corner,
        min_det_J=validate(mesh).min_det,
        area=mesh.area,
    )


def run_ma_solve(config: AdaptConfig):
    """Map an analytic target density on the configured mesh.

    Returns:
        ``(report, solution, adapted_mesh)``.
    """
    mesh, geometry = build_mesh(config.mesh)
    density = target_density(config.density, mesh)
    sol = ma.fixed_point_solve(mesh, geometry, density, params=config.ma)
    out = dict(sol.diagnostics)
    out["q_minus_x_inf"] = float(np.abs(sol.q - mesh.coords).max())
    out["theta"] = density.theta
    out["equidistribution"] = ma.equidistribution_deviation(sol, density)
    out["residual_history"] = sol.residual_history
    adapted = ma.corner_fix(ma.extract_adapted_mesh(mesh, sol, geometry), geometry)
    out["adapted"] = boundary_diagnostics(adapted, geometry)
    out["adapted"]["initial_area"] = mesh.area
    return dict(schema=REPORT_SCHEMA, mode="ma-solve", config=config.to_dict(), result=out), sol, adapted
