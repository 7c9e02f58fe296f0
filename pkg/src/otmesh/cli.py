"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import driver, fields, io, shock_reg
from .config import ConfigError, load_config, parse_config
from .fields import StateFieldDG

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

DEMOS = {
    "identity": """
[otmesh]
version = 1
[mesh]
generator = unit_square
n = 8
k = 2
[density]
preset = uniform
""",
    "ring": """
[otmesh]
version = 1
[mesh]
generator = unit_square
n = 20
k = 2
[density]
preset = gaussian-ring
width = 0.2
""",
    "tanh": """
[otmesh]
version = 1
[mesh]
generator = unit_square
n = 16
k = 3
[state]
preset = tanh-shock
x0 = 0.5
width = 0.02
[monitor]
option = density_gradient
beta = 1.0
[adapt]
max_adapt = 2
[output]
vtk = true
""",
    "double-ramp": """
[otmesh]
version = 1
[mesh]
generator = double_ramp
n = 8
ny = 10
k = 2
[density]
preset = oblique-band
px = 1.0
py = 0.0
angle = 40
width = 0.2
""",
}
DENSITY_DEMOS = ("identity", "ring", "double-ramp")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="otmesh", description="Optimal-transport r-adaptation of high-order quadrilateral meshes.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("adapt", help="run the adaptation loop from a config file")
    a.add_argument("config", type=Path)
    a.add_argument("--out", type=Path, help="override the output directory")

    m = sub.add_parser("ma-solve", help="solve for the map of an analytic density (no flow state)")
    m.add_argument("config", type=Path)
    m.add_argument("--out", type=Path, help="override the output directory")

    c = sub.add_parser("check-state", help="check positivity and smoothness constraints of a state")
    c.add_argument("mesh", type=Path)
    c.add_argument("state", type=Path)
    c.add_argument("--sigma0", type=float, default=None, help="baseline smoothness; omit to skip that check")
    c.add_argument("--c0", type=float, default=shock_reg.C0)
    c.add_argument("--xi", choices=("density", "pressure", "mach"), default="density")

    e = sub.add_parser("export-vtk", help="write a mesh and optional nodal fields as legacy VTK")
    e.add_argument("mesh", type=Path)
    e.add_argument("fields", type=Path, nargs="*")
    e.add_argument("-o", "--output", type=Path, default=None)

    d = sub.add_parser("demo", help="run a built-in example")
    d.add_argument("preset", choices=sorted(DEMOS))
    d.add_argument("--out", type=Path, default=Path("demo_out"))
    return p


def _summary(obj) -> str:
    return json.dumps(driver._jsonable(obj), indent=2)


def cmd_adapt(cfg, out_override=None) -> int:
    if out_override is not None:
        cfg.output.directory = out_override
    rep = driver.run_adaptation(cfg)
    for it in rep.iterations:
        print(
            f"iteration {it['iteration']}: MA {it['ma_iterations']} its, min det H {it['min_det_H']:.3g}, "
            f"min det J {it['min_det_J']:.3g}, state change {it['state_change']:.3e}"
        )
    print(f"report: {Path(cfg.output.directory) / 'report.json'}")
    return EXIT_OK


def cmd_ma_solve(cfg, out_override=None) -> int:
    out = Path(out_override or cfg.output.directory)
    report, sol, adapted = driver.run_ma_solve(cfg)
    out.mkdir(parents=True, exist_ok=True)
    io.save_mesh(adapted, out / "adapted.otm")
    if cfg.output.vtk:
        io.write_vtk(adapted, out / "adapted.vtk")
    (out / "report.json").write_text(_summary(report) + "\n", encoding="utf-8")
    r = report["result"]
    print(
        f"MA: {r['iterations']} its, |q - x|_inf = {r['q_minus_x_inf']:.3e}, min det H = {r['min_det_H']:.3g}, "
        f"equidistribution {r['equidistribution']:.3%}"
    )
    print(f"report: {out / 'report.json'}")
    return EXIT_OK if sol.converged else EXIT_NUMERICAL


def cmd_check_state(args) -> int:
    mesh = io.load_mesh(args.mesh)
    k, vals = io.load_field_array(args.state)
    if k != mesh.k or vals.shape != mesh.coords.shape[:2] + (4,):
        print(f"error: state {args.state} (k={k}, shape {vals.shape}) does not match mesh {args.mesh}", file=sys.stderr)
        return EXIT_USAGE
    state = StateFieldDG(mesh, vals)
    sigma0 = np.inf if args.sigma0 is None else args.sigma0
    v = shock_reg.check_constraints(state, None, sigma0, args.c0, args.xi)
    if v.passed:
        print(f"pass (sigma = {v.sigma:.4g})")
        return EXIT_OK
    print(f"fail({v.reason}) at element {v.element}, value {v.value:.4g}")
    return EXIT_NUMERICAL


def cmd_export_vtk(args) -> int:
    mesh = io.load_mesh(args.mesh, validate=False)
    data = {}
    for f in args.fields:
        k, vals = io.load_field_array(f)
        if k != mesh.k or vals.shape[:2] != mesh.coords.shape[:2]:
            print(f"error: field {f} does not match mesh {args.mesh}", file=sys.stderr)
            return EXIT_USAGE
        data[f.stem] = vals[..., 0] if vals.shape[2] == 1 else vals
    out = args.output or args.mesh.with_suffix(".vtk")
    io.write_vtk(mesh, out, data)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_demo(args) -> int:
    cfg = parse_config(DEMOS[args.preset], Path("."))
    cfg.output.directory = args.out
    if args.preset in DENSITY_DEMOS:
        return cmd_ma_solve(cfg, args.out)
    return cmd_adapt(cfg, args.out)


USAGE_ERRORS = (ConfigError, FileNotFoundError, io.ParseError, IsADirectoryError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "adapt":
            return cmd_adapt(load_config(args.config), args.out)
        if args.command == "ma-solve":
            return cmd_ma_solve(load_config(args.config), args.out)
        if args.command == "check-state":
            return cmd_check_state(args)
        if args.command == "export-vtk":
            return cmd_export_vtk(args)
        if args.command == "demo":
            return cmd_demo(args)
    except driver.StepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc.cause, USAGE_ERRORS) else EXIT_NUMERICAL
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except fields.NonPositiveDensity as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
