"""Command-line front end.

Subcommands::

    signorini solve        one Nitsche solve with estimator summary and dumps
    signorini adapt        adaptive loop with per-step mesh and solution dumps
    signorini convergence  uniform and/or adaptive runs, CSV tables and SVG plot
    signorini estimate-ci  inverse-constant estimates under uniform refinement

Exit codes: 0 success, 2 bad arguments, 3 unreadable mesh file,
4 solver failure, 5 output failure.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
import warnings

from . import __version__
from .adapt import CSV_HEADER, RunConfig, Step, fit_rate, run_sequence
from .estimator import global_estimate
from .expr import ExpressionError, parse_load
from .mesh import MeshError, read_mesh, refine_uniform, write_mesh
from .output import (OutputError, write_convergence_plot, write_indicator_csv,
                     write_solution_vtk)
from .problems import BUILTIN, file_problem, get_problem
from .solver import (NitscheConfig, SolverError, estimate_inverse_constant,
                     solve_nitsche)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MESH = 3
EXIT_SOLVER = 4
EXIT_OUTPUT = 5


class UsageError(ValueError):
    pass


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", default="signorini-paper", choices=sorted(BUILTIN),
                        help="built-in problem (ignored with --mesh-file)")
    common.add_argument("--mesh-file", help="mesh in the text format; needs --load-expr")
    common.add_argument("--load-expr", help="load f(x, y), e.g. 'x*cos(2*pi*y)'")
    common.add_argument("--n", type=_positive_int, default=4,
                        help="subdivisions of the initial unit-square mesh (default 4)")
    common.add_argument("--degree", type=int, choices=(1, 2), default=2)
    common.add_argument("--alpha", type=float, default=0.1, help="Nitsche parameter")
    common.add_argument("--quad-degree", type=int, default=4,
                        help="triangle quadrature degree for the load")
    common.add_argument("--output", default="out", help="output directory")
    common.add_argument("--csv-only", action="store_true",
                        help="skip mesh, solution and plot files")
    common.add_argument("--seed", type=int, default=0,
                        help="reserved; every computation is deterministic")
    common.add_argument("-v", "--verbose", action="count", default=0)

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--theta", type=float, default=0.5, help="marking fraction")
    run.add_argument("--max-dofs", type=_positive_int, default=100_000, help="dof budget")
    run.add_argument("--steps", type=int, help="maximum number of refinement steps")

    p = argparse.ArgumentParser(prog="signorini", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="single solve")
    a = sub.add_parser("adapt", parents=[common, run], help="refinement loop with dumps")
    a.add_argument("--strategy", choices=("uniform", "adaptive"), default="adaptive")
    c = sub.add_parser("convergence", parents=[common, run], help="convergence study")
    c.add_argument("--strategy", choices=("uniform", "adaptive"),
                   help="run one strategy only (default: both)")
    e = sub.add_parser("estimate-ci", parents=[common], help="inverse constant")
    e.add_argument("--levels", type=_positive_int, default=3,
                   help="number of meshes (uniform refinements of the initial one)")
    return p


def _problem(args):
    if args.mesh_file is None:
        if args.load_expr is not None:
            raise UsageError("--load-expr needs --mesh-file")
        return get_problem(args.problem)
    if args.load_expr is None:
        raise UsageError("--mesh-file needs --load-expr")
    load = parse_load(args.load_expr)
    try:
        mesh = read_mesh(args.mesh_file)
    except OSError as exc:
        raise MeshError(f"cannot read {args.mesh_file}: {exc.strerror or exc}") from exc
    if mesh.contact_sides() > 1:
        warnings.warn(f"{args.mesh_file}: contact boundary spans {mesh.contact_sides()} "
                      "straight sides; the estimator theory assumes a single side")
    return file_problem(mesh, load, name=os.path.basename(args.mesh_file))


def _nitsche(args) -> NitscheConfig:
    return NitscheConfig(alpha=args.alpha, degree=args.degree, quad_degree=args.quad_degree)


def _outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {path}: {exc.strerror or exc}") from exc
    return path


def cmd_solve(args) -> int:
    prob = _problem(args)
    mesh = prob.initial_mesh(args.n)
    u, c = solve_nitsche(mesh, prob.load, _nitsche(args))
    ind = global_estimate(u, c, prob.load)
    out = _outdir(args.output)
    write_indicator_csv(mesh, ind, os.path.join(out, "indicators.csv"))
    if not args.csv_only:
        write_mesh(mesh, os.path.join(out, "mesh.txt"))
        write_solution_vtk(mesh, u, c, os.path.join(out, "solution.vtk"))
    print(f"problem      {prob.name}")
    print(f"N            {u.dofmap.N}")
    print(f"iterations   {u.iterations}")
    print(f"active       {c.n_active}")
    print(f"eta          {ind.eta!r}")
    print(f"S            {ind.S!r}")
    print(f"eta+S        {ind.eta_plus_S!r}")
    return EXIT_OK


def _run(args, strategy, out, prefix, dumps):
    prob = _problem(args)
    cfg = RunConfig(strategy=strategy, theta=args.theta, max_dofs=args.max_dofs,
                    nitsche=_nitsche(args), degree=args.degree, problem=prob,
                    initial_n=args.n, max_steps=args.steps)
    path = os.path.join(out, f"{prefix}.csv")
    try:
        fh = open(path, "w", newline="\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc

    def on_step(s: Step):
        fh.write(s.record.csv_row() + "\n")
        fh.flush()
        if dumps:
            tag = f"{s.record.step:02d}"
            write_mesh(s.mesh, os.path.join(out, f"mesh_{tag}.txt"))
            write_solution_vtk(s.mesh, s.solution, s.contact,
                               os.path.join(out, f"solution_{tag}.vtk"))
        print(f"{strategy:9s} step {s.record.step:3d}  N={s.record.N:8d}  "
              f"eta+S={s.record.eta_plus_S:.4e}  active={s.record.active_points}", flush=True)

    with fh:
        fh.write(CSV_HEADER + "\n")
        return run_sequence(cfg, on_step)


def cmd_adapt(args) -> int:
    if args.steps is None:
        args.steps = 8
    out = _outdir(args.output)
    records = _run(args, args.strategy, out, "convergence", not args.csv_only)
    if len(records) >= 2:
        print(f"fitted slope {fit_rate(records, min(4, len(records))):.4f}")
    return EXIT_OK


def cmd_convergence(args) -> int:
    out = _outdir(args.output)
    strategies = [args.strategy] if args.strategy else ["uniform", "adaptive"]
    series = {}
    for s in strategies:
        series[s] = _run(args, s, out, f"convergence_{s}", False)
    for s, recs in series.items():
        if len(recs) >= 2:
            print(f"{s} fitted slope {fit_rate(recs, min(4, len(recs))):.4f}")
    if not args.csv_only and all(len(r) >= 2 for r in series.values()):
        write_convergence_plot(series, os.path.join(out, "convergence.svg"))
    return EXIT_OK


def cmd_estimate_ci(args) -> int:
    prob = _problem(args)
    mesh = prob.initial_mesh(args.n)
    values = []
    for level in range(args.levels):
        ci = estimate_inverse_constant(mesh, args.degree)
        values.append(ci)
        flag = "ok" if args.alpha < ci else "alpha too large"
        print(f"level {level}  elements {mesh.nt:7d}  C_I {ci:.6f}  {flag}")
        if level + 1 < args.levels:
            mesh = refine_uniform(mesh)
    spread = (max(values) - min(values)) / max(values)
    print(f"relative spread {spread:.4f}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "adapt": cmd_adapt, "convergence": cmd_convergence,
            "estimate-ci": cmd_estimate_ci}


def _thread_limit():
    value = os.environ.get("SIGNORINI_THREADS")
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"SIGNORINI_THREADS must be a positive integer, got {value!r}") from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        with _thread_limit():
            return COMMANDS[args.command](args)
    except MeshError as exc:
        print(f"signorini: mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except SolverError as exc:
        print(f"signorini: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"signorini: output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    except (UsageError, ExpressionError, ValueError) as exc:
        print(f"signorini: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
