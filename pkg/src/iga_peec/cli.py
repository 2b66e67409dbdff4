"""Command-line front end.

Subcommands: capacitance, convergence, netlist, verify, charges.  Geometry
comes from a file or a builtin specifier (`spheres:r_in,r_out`,
`sphere:r`), so studies run without fixture files.  Exit codes: 0 success,
2 configuration problem, 3 numerical failure.
"""
import argparse
import json
import math
import os
import sys

import numpy as np

from . import baseline_tri, circuit, netlist as netmod, report
from .assembly import (assemble_potential_matrix, assemble_rhs, load_matrix,
                       save_matrix)
from .errors import (ConfigError, GeometryParseError, IgaPeecError,
                     InvalidGeometryError, NetlistParseError)
from .geometry import (load_geometry, make_concentric_spheres, make_sphere,
                       refine)
from .quadrature import QuadConfig
from .solver import electrode_charges, solve_direct

EPSILON0 = 8.8541878128e-12


def _parse_geometry(spec):
    if spec is None:
        raise ConfigError("no geometry given; use --geometry")
    if spec.startswith("spheres:"):
        body = spec[len("spheres:"):]
        parts = body.split(",")
        if len(parts) != 2:
            raise ConfigError(
                f"builtin 'spheres' needs r_in,r_out, got {body!r}")
        try:
            r_in, r_out = (float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"bad radius in geometry spec {spec!r}")
        return make_concentric_spheres(r_in, r_out)
    if spec.startswith("sphere:"):
        body = spec[len("sphere:"):]
        try:
            radius = float(body)
        except ValueError:
            raise ConfigError(f"bad radius in geometry spec {spec!r}")
        return make_sphere(radius)
    if not os.path.exists(spec):
        raise ConfigError(
            f"geometry {spec!r} is neither a builtin spec nor a file")
    return load_geometry(spec)


def _parse_potentials(items, mesh):
    domains = sorted(int(d) for d in np.unique(mesh.domains))
    if not items:
        # default drive: first domain at 1 V, the rest grounded
        return {d: (1.0 if d == domains[0] else 0.0) for d in domains}
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(
                f"--potential needs the form <domain>=<volt>, got {item!r}")
        d, v = item.split("=", 1)
        try:
            out[int(d)] = float(v)
        except ValueError:
            raise ConfigError(f"bad --potential value {item!r}")
    missing = [d for d in domains if d not in out]
    if missing:
        raise ConfigError(f"no potential prescribed for domain(s) {missing}")
    return out


def _quad_config(args):
    return QuadConfig(base_order=args.quad_base,
                      near_increment_cap=args.quad_near_cap,
                      singular_order=args.quad_singular)


def _total_capacitance(potentials, charges):
    vals = sorted(potentials.values())
    dv = vals[-1] - vals[0]
    driven = max(potentials, key=lambda d: potentials[d])
    if dv > 0.0:
        return charges[driven] / dv
    v = vals[-1]
    if v == 0.0:
        raise ConfigError("all potentials are zero; capacitance is undefined")
    return sum(charges.values()) / v


def _solve_mesh(args, mesh):
    config = _quad_config(args)
    matrix = assemble_potential_matrix(mesh, config, threads=args.threads)
    potentials = _parse_potentials(args.potential, mesh)
    rhs = assemble_rhs(mesh, potentials)
    q = solve_direct(matrix, rhs)
    return matrix, potentials, q


def cmd_capacitance(args):
    mesh = refine(_parse_geometry(args.geometry), args.level)
    matrix, potentials, q = _solve_mesh(args, mesh)
    charges = electrode_charges(q, mesh)
    c_total = _total_capacitance(potentials, charges)
    out = {"C_total_farad": c_total,
           "Q_per_domain": {str(d): charges[d] for d in sorted(charges)},
           "dof": mesh.n_elements}
    print(json.dumps(out))
    if args.csv_out:
        report.write_capacitance_csv(args.csv_out, mesh.n_elements, c_total,
                                     charges)
    if args.p_matrix_out:
        save_matrix(args.p_matrix_out, matrix)
    if args.tags_out:
        _write_tags(args.tags_out, mesh)
    return 0


def _reference_capacitance(spec):
    if spec.startswith("spheres:"):
        r_in, r_out = (float(p) for p in spec[len("spheres:"):].split(","))
        return 4.0 * math.pi * EPSILON0 / (1.0 / r_in - 1.0 / r_out)
    if spec.startswith("sphere:"):
        return 4.0 * math.pi * EPSILON0 * float(spec[len("sphere:"):])
    raise ConfigError(
        "convergence needs a builtin sphere geometry with an analytic value")


def _spline_convergence(args, levels):
    config = _quad_config(args)
    c_ana = _reference_capacitance(args.geometry)
    rows = []
    for lvl in levels:
        mesh = refine(_parse_geometry(args.geometry), lvl)
        matrix = assemble_potential_matrix(mesh, config, threads=args.threads)
        potentials = _parse_potentials(args.potential, mesh)
        q = solve_direct(matrix, assemble_rhs(mesh, potentials))
        charges = electrode_charges(q, mesh)
        c = _total_capacitance(potentials, charges)
        rows.append((mesh.n_elements, c, abs(c - c_ana) / c_ana))
    return rows


def _tri_convergence(args, levels):
    spec = args.geometry
    if spec.startswith("spheres:"):
        r_in, r_out = (float(p) for p in spec[len("spheres:"):].split(","))
        return baseline_tri.convergence_tri(r_in, r_out, levels,
                                            _quad_config(args), args.threads)
    raise ConfigError("triangle baseline needs the 'spheres:' geometry")


def fit_slope_vs_h(levels, errors):
    """Least-squares slope of log error against log h, h halving per level."""
    h = np.log([0.5 ** lv for lv in levels])
    e = np.log(errors)
    return float(np.polyfit(h, e, 1)[0])


def cmd_convergence(args):
    levels = args.levels
    rows = (_tri_convergence(args, levels) if args.method == "tri"
            else _spline_convergence(args, levels))
    for dof, c, err in rows:
        print(f"{dof},{c:.17g},{err:.17g}")
    if len(levels) >= 2:
        slope = fit_slope_vs_h(levels, [r[2] for r in rows])
        print(f"slope vs h: {slope:.4f}")
    if args.csv_out:
        report.write_convergence_csv(args.csv_out, rows)
        stem, _ = os.path.splitext(args.csv_out)
        report.render_convergence_figure(stem + ".png",
                                         {args.method: rows})
    return 0


def _write_tags(path, mesh):
    with open(path, "w") as fh:
        fh.write("element,domain\n")
        for i, d in enumerate(mesh.domains, start=1):
            fh.write(f"{i},{int(d)}\n")


def _read_tags(path):
    tags = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.lower().startswith("element"):
                continue
            parts = line.split(",")
            try:
                tags.append(int(parts[-1]))
            except ValueError:
                raise ConfigError(
                    f"bad domain tag in {path} line {lineno}: {line!r}")
    if not tags:
        raise ConfigError(f"tag file {path} holds no tags")
    return np.asarray(tags, dtype=int)


def cmd_netlist(args):
    if args.netlist_out is None:
        raise ConfigError("netlist command needs --netlist-out")
    if args.p_matrix and args.tags:
        entries = load_matrix(args.p_matrix)
        tags = _read_tags(args.tags)
        net = netmod.stamp(entries, tags)
        mesh = None
    else:
        mesh = refine(_parse_geometry(args.geometry), args.level)
        config = _quad_config(args)
        matrix = assemble_potential_matrix(mesh, config, threads=args.threads)
        net = netmod.stamp(matrix, mesh.domains)
        if args.p_matrix:
            save_matrix(args.p_matrix, matrix)
        if args.tags:
            _write_tags(args.tags, mesh)
    netmod.write_netlist(net, args.netlist_out)
    out = {"path": args.netlist_out, "components": net.component_count,
           "capacitors": len(net.capacitors), "vsources": len(net.vsources),
           "cccs": len(net.cccs)}
    if args.verify:
        if mesh is None:
            raise ConfigError("--verify needs an assembled geometry, "
                              "not a matrix dump")
        potentials = _parse_potentials(args.potential, mesh)
        rep = circuit.verify_netlist(matrix, mesh, potentials,
                                     omega=args.omega)
        out.update(rep)
    print(json.dumps(out))
    if args.verify and out["mismatch"] > 1e-8:
        return 3
    return 0


def cmd_verify(args):
    mesh = refine(_parse_geometry(args.geometry), args.level)
    config = _quad_config(args)
    matrix = assemble_potential_matrix(mesh, config, threads=args.threads)
    potentials = _parse_potentials(args.potential, mesh)
    rep = circuit.verify_netlist(matrix, mesh, potentials, omega=args.omega)
    print(json.dumps(rep))
    return 0 if rep["mismatch"] <= 1e-8 else 3


def cmd_charges(args):
    mesh = refine(_parse_geometry(args.geometry), args.level)
    _, _, q = _solve_mesh(args, mesh)
    if args.csv_out:
        report.write_charges_csv(args.csv_out, mesh, q)
    else:
        print("element,patch,domain,area_m2,charge_C,density_C_m2")
        for i in range(mesh.n_elements):
            a = float(mesh.areas[i])
            print(f"{i + 1},{int(mesh.patch_index[i]) + 1},"
                  f"{int(mesh.domains[i])},{a:.17g},{q[i]:.17g},"
                  f"{q[i] / a:.17g}")
    return 0


def _add_common(p):
    p.add_argument("--geometry", help="file path or builtin "
                   "'spheres:r_in,r_out' / 'sphere:r'")
    p.add_argument("--level", type=int, default=0,
                   help="dyadic refinement level")
    p.add_argument("--potential", action="append", default=[],
                   metavar="D=V", help="domain potential, repeatable")
    p.add_argument("--quad-base", type=int, default=4)
    p.add_argument("--quad-near-cap", type=int, default=6)
    p.add_argument("--quad-singular", type=int, default=8)
    p.add_argument("--threads", type=int, default=None,
                   help="assembly workers (IGA_PEEC_THREADS as fallback)")
    p.add_argument("--csv-out", help="write the delimited report here")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="iga-peec",
        description="Spline-surface electrostatic solver with an "
                    "equivalent-circuit export")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capacitance", help="solve and report capacitance")
    _add_common(p)
    p.add_argument("--p-matrix-out", help="dump the assembled matrix")
    p.add_argument("--tags-out", help="dump per-element domain tags")
    p.set_defaults(fn=cmd_capacitance)

    p = sub.add_parser("convergence", help="error vs refinement study")
    _add_common(p)
    p.add_argument("--levels", type=lambda s: [int(t) for t in s.split(",")],
                   default=[0, 1, 2], help="comma-separated levels")
    p.add_argument("--method", choices=("spline", "tri"), default="spline")
    p.set_defaults(fn=cmd_convergence)

    p = sub.add_parser("netlist", help="stamp and write the circuit file")
    _add_common(p)
    p.add_argument("--netlist-out", help="output circuit file")
    p.add_argument("--p-matrix", help="matrix dump to stamp from (with "
                   "--tags), or dump target when assembling")
    p.add_argument("--tags", help="domain tag file to stamp from, or dump "
                   "target when assembling")
    p.add_argument("--verify", action="store_true",
                   help="also run the circuit-solver cross check")
    p.add_argument("--omega", type=float, default=2.0 * math.pi * 50.0)
    p.set_defaults(fn=cmd_netlist)

    p = sub.add_parser("verify", help="circuit solver vs direct solve")
    _add_common(p)
    p.add_argument("--omega", type=float, default=2.0 * math.pi * 50.0)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("charges", help="per-element charge table")
    _add_common(p)
    p.set_defaults(fn=cmd_charges)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, GeometryParseError, InvalidGeometryError,
            NetlistParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IgaPeecError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
