"""Command-line entry point: mesh generation/import, expansion-order
certification, relaxed-objective evaluation and density optimization.

Exit codes: 0 success, 2 usage / parameter errors, 3 input-data errors
(missing or malformed files), 4 solver failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import expansion, fem, optimizer, relax, vtkio
from .eig import SolverError, smallest_eigenpair
from .mesh import MshParseError, generate_unit_square, import_msh

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_SOLVER = 4

DEFAULT_EPS_GRID = "1e-1,3.1622776601683794e-2,1e-2,3.1622776601683794e-3,1e-3"


class InputError(Exception):
    """Bad input data (files, field coverage); maps to exit code 3."""


def _load_mesh(args):
    if getattr(args, "mesh_file", None):
        return import_msh(args.mesh_file)
    nx = getattr(args, "nx", None)
    ny = getattr(args, "ny", None)
    if nx is None or ny is None:
        raise ValueError("provide either --mesh-file or both --nx and --ny")
    return generate_unit_square(nx, ny)


def read_field_csv(path, n_nodes: int) -> np.ndarray:
    """Read a node-indexed CSV (node_id,value); every node must appear once."""
    values = np.full(n_nodes, np.nan)
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or not row[0].strip():
                    continue
                try:
                    idx = int(row[0])
                except ValueError:
                    continue  # header line
                if len(row) < 2:
                    raise InputError(f"{path}: row for node {idx} has no value")
                if not 0 <= idx < n_nodes:
                    raise InputError(f"{path}: node id {idx} out of range (mesh has {n_nodes})")
                values[idx] = float(row[1])
    except OSError as exc:
        raise InputError(f"cannot read field file: {exc}") from exc
    if np.isnan(values).any():
        missing = int(np.isnan(values).sum())
        raise InputError(f"{path}: {missing} node(s) missing a value")
    return values


def write_field_csv(path, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "value"])
        for i, v in enumerate(np.asarray(values, dtype=float)):
            w.writerow([i, f"{v:.17g}"])


def rasterize_shapes(mesh, specs) -> np.ndarray:
    """0/1 density from shape specs evaluated at element centroids.

    Each spec is ``disk cx cy r`` or ``rect x0 y0 x1 y1``; repeated specs
    take the union.  The element indicator is lifted to nodes by maximum
    over adjacent elements, so it stays 0/1-valued.
    """
    centroids = mesh.node_coords[mesh.triangles].mean(axis=1)
    inside = np.zeros(mesh.n_elems, dtype=bool)
    for spec in specs:
        kind = spec[0]
        try:
            if kind == "disk":
                cx, cy, r = (float(x) for x in spec[1:4])
                d2 = (centroids[:, 0] - cx) ** 2 + (centroids[:, 1] - cy) ** 2
                inside |= d2 <= r * r
            elif kind == "rect":
                x0, y0, x1, y1 = (float(x) for x in spec[1:5])
                inside |= (
                    (centroids[:, 0] >= x0)
                    & (centroids[:, 0] <= x1)
                    & (centroids[:, 1] >= y0)
                    & (centroids[:, 1] <= y1)
                )
            else:
                raise ValueError(f"unknown shape '{kind}' (use disk or rect)")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ValueError) and "unknown shape" in str(exc):
                raise
            raise ValueError(f"malformed --chi spec {spec}") from exc
    elem = inside.astype(float)
    theta = np.zeros(mesh.n_nodes)
    np.maximum.at(theta, mesh.triangles.ravel(), np.repeat(elem, 3))
    return theta


def _theta_from_args(args, mesh) -> np.ndarray:
    sources = [
        args.theta is not None,
        bool(args.chi),
        args.random_theta,
    ]
    if sum(sources) != 1:
        raise ValueError("choose exactly one of --theta, --chi, --random-theta")
    if args.theta is not None:
        return read_field_csv(args.theta, mesh.n_nodes)
    if args.chi:
        return rasterize_shapes(mesh, args.chi)
    rng = np.random.default_rng(args.seed)
    return (rng.random(mesh.n_nodes) < 0.5).astype(float)


# -- subcommands --------------------------------------------------------------


def cmd_mesh(args) -> int:
    if args.mesh_cmd == "square":
        m = generate_unit_square(args.nx, args.ny)
    else:
        m = import_msh(args.file)
    print(f"{m.n_nodes} nodes, {m.n_elems} triangles, {m.boundary_nodes.size} boundary nodes")
    print(f"total area {m.total_area:.12g}")
    if args.out:
        vtkio.export_vtk(m, {}, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_expand(args) -> int:
    import warnings

    m = _load_mesh(args)
    theta = _theta_from_args(args, m)
    eps = [float(x) for x in args.eps.split(",") if x.strip()]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # excluded points printed below
        report = expansion.remainder_report(m, theta, args.alpha, args.order, eps, tol=args.tol)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"remainder_order{args.order}.csv"
    json_path = out_dir / f"remainder_order{args.order}.json"
    report.write_csv(csv_path)
    report.write_json(json_path)

    if report.slope is None:
        print(f"order {args.order}: all remainders at the solver floor (series exact)")
    else:
        print(f"order {args.order} remainder slope: {report.slope:.4f} (constant {report.constant:.6g})")
    if report.excluded:
        print(f"excluded eps (floor): {report.excluded}")
    if args.bounds_samples > 0:
        diag = expansion.mode_bound_diagnostic(m, args.alpha, samples=args.bounds_samples, seed=args.seed or 0)
        print(
            "mode energy norms over {samples} random densities: "
            "max |u1|_E = {max_energy_norm_u1:.6g}, max |u2|_E = {max_energy_norm_u2:.6g}".format(**diag)
        )
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_optimize(args) -> int:
    m = _load_mesh(args)
    config = optimizer.OptimizerConfig(
        epsilon=args.epsilon,
        volume_fraction=args.volume_fraction,
        alpha=args.alpha,
        rho0=args.rho0,
        max_iters=args.max_iters,
        tol_step=args.tol_step,
        tol_vol=args.tol_vol,
        armijo_c=args.armijo_c,
        armijo_shrink=args.armijo_shrink,
        seed=args.seed,
    )
    problem = relax.RelaxedObjective(m, config.alpha, config.epsilon)
    state, final, kkt = optimizer.run(m, config, problem=problem)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vtkio.export_vtk(
        m,
        {"theta": state.theta, "u0": problem.ground.u, "grad_density": final.grad_density},
        out_dir / "theta.vtk",
    )
    write_field_csv(out_dir / "theta.csv", state.theta)
    optimizer.write_history_csv(state, out_dir / "history.csv")

    total = float(problem.lumped.sum())
    print(f"iterations: {state.iter}  stalled: {state.stalled}")
    print(f"F = {final.F:.12g}")
    print(f"lambda1 = {final.lambda1:.12g}")
    print(
        f"volume = {state.vol_history[-1]:.12g} "
        f"(target {config.volume_fraction * total:.12g})"
    )
    print(f"KKT interior residual = {kkt[0]:.6g}")
    print(f"KKT sign violation = {kkt[1]:.6g}")
    print(f"wrote {out_dir / 'theta.vtk'}, {out_dir / 'theta.csv'}, {out_dir / 'history.csv'}")
    return 0


def cmd_eval(args) -> int:
    m = _load_mesh(args)
    theta = _theta_from_args(args, m)
    problem = relax.RelaxedObjective(m, args.alpha, args.epsilon)
    ev = problem.evaluate(theta)
    lumped = problem.lumped
    if args.multiplier is None:
        multiplier = -float(lumped @ ev.grad_density) / float(lumped.sum())
    else:
        multiplier = args.multiplier
    kkt = problem.kkt(theta, multiplier, band=args.band)
    print(f"F = {ev.F:.12g}")
    print(f"lambda1 = {ev.lambda1:.12g}")
    print(f"volume = {float(lumped @ theta):.12g}")
    print(f"multiplier = {multiplier:.12g}")
    print(f"KKT interior residual = {kkt[0]:.6g}")
    print(f"KKT sign violation = {kkt[1]:.6g}")
    if args.out:
        vtkio.export_vtk(
            m,
            {"theta": theta, "u0": problem.ground.u, "v_inf": ev.v_inf, "grad_density": ev.grad_density},
            args.out,
        )
        print(f"wrote {args.out}")
    return 0


def cmd_export(args) -> int:
    m = _load_mesh(args)
    fields = {}
    for item in args.field or []:
        if "=" not in item:
            raise ValueError(f"--field needs name=path.csv, got '{item}'")
        name, path = item.split("=", 1)
        fields[name] = read_field_csv(path, m.n_nodes)
    vtkio.export_vtk(m, fields, args.out)
    print(f"wrote {args.out}")
    return 0


# -- parser -------------------------------------------------------------------


def _add_mesh_source(p):
    p.add_argument("--nx", type=int, help="cells in x for a generated unit square")
    p.add_argument("--ny", type=int, help="cells in y for a generated unit square")
    p.add_argument("--mesh-file", help="MSH 2.2 ASCII file to import instead")


def _add_theta_source(p):
    p.add_argument("--theta", help="node-indexed CSV (node_id,value)")
    p.add_argument(
        "--chi",
        action="append",
        nargs="+",
        metavar="SPEC",
        help="shape indicator: 'disk cx cy r' or 'rect x0 y0 x1 y1'; repeat for unions",
    )
    p.add_argument(
        "--random-theta", action="store_true", help="random 0/1 nodal density (see --seed)"
    )
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lowcontrast",
        description="Two-phase ground-state design in the low-contrast regime.",
    )
    parser.add_argument("--config", help="JSON file whose entries override flags")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="generate or import a mesh")
    mesh_sub = p_mesh.add_subparsers(dest="mesh_cmd", required=True)
    p_sq = mesh_sub.add_parser("square", help="structured unit square")
    p_sq.add_argument("--nx", type=int, required=True)
    p_sq.add_argument("--ny", type=int, required=True)
    p_sq.add_argument("--out", help="optional VTK output")
    p_sq.set_defaults(func=cmd_mesh)
    p_im = mesh_sub.add_parser("import", help="import MSH 2.2 ASCII")
    p_im.add_argument("--file", required=True)
    p_im.add_argument("--out", help="optional VTK output")
    p_im.set_defaults(func=cmd_mesh)

    p_ex = sub.add_parser("expand", help="series + remainder-order certification")
    _add_mesh_source(p_ex)
    _add_theta_source(p_ex)
    p_ex.add_argument("--alpha", type=float, default=1.0)
    p_ex.add_argument("--order", type=int, default=2)
    p_ex.add_argument("--eps", default=DEFAULT_EPS_GRID, help="comma-separated contrast values")
    p_ex.add_argument("--tol", type=float, default=1e-12, help="eigensolver tolerance")
    p_ex.add_argument("--out-dir", default=".")
    p_ex.add_argument(
        "--bounds-samples",
        type=int,
        default=0,
        help="also report max mode energy norms over this many random densities",
    )
    p_ex.set_defaults(func=cmd_expand)

    p_opt = sub.add_parser("optimize", help="projected descent on the relaxed objective")
    _add_mesh_source(p_opt)
    p_opt.add_argument("--epsilon", type=float, required=True)
    p_opt.add_argument("--volume-fraction", type=float, required=True, help="target m/|area|")
    p_opt.add_argument("--alpha", type=float, default=1.0)
    p_opt.add_argument("--rho0", type=float, default=None)
    p_opt.add_argument("--max-iters", type=int, default=2000)
    p_opt.add_argument("--tol-step", type=float, default=1e-7)
    p_opt.add_argument("--tol-vol", type=float, default=None)
    p_opt.add_argument("--armijo-c", type=float, default=1e-4)
    p_opt.add_argument("--armijo-shrink", type=float, default=0.5)
    p_opt.add_argument("--seed", type=int, default=None, help="randomized feasible start")
    p_opt.add_argument("--out-dir", default=".")
    p_opt.set_defaults(func=cmd_optimize)

    p_ev = sub.add_parser("eval", help="evaluate the relaxed objective for a density")
    _add_mesh_source(p_ev)
    _add_theta_source(p_ev)
    p_ev.add_argument("--epsilon", type=float, required=True)
    p_ev.add_argument("--alpha", type=float, default=1.0)
    p_ev.add_argument("--multiplier", type=float, default=None, help="sign-adjusted multiplier")
    p_ev.add_argument("--band", type=float, default=0.01)
    p_ev.add_argument("--out", help="optional VTK output")
    p_ev.set_defaults(func=cmd_eval)

    p_xp = sub.add_parser("export", help="write mesh + CSV fields to legacy VTK")
    _add_mesh_source(p_xp)
    p_xp.add_argument("--field", action="append", help="name=path.csv (repeatable)")
    p_xp.add_argument("--out", required=True)
    p_xp.set_defaults(func=cmd_export)

    return parser


def _apply_config(args) -> None:
    try:
        with open(args.config) as fh:
            overrides = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed config JSON: {exc}") from exc
    if not isinstance(overrides, dict):
        raise ValueError("config JSON must be an object of flag values")
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ValueError(f"config key '{key}' does not match any flag")
        setattr(args, attr, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            _apply_config(args)
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, MshParseError, FileNotFoundError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
