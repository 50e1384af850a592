"""Command-line entry point.

Exit codes: 0 on success, 1 on usage errors (bad arguments, bad config), 2 on
runtime errors (CFL violation, infeasible projection, non-convergence, failed
check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, bundled_names, bundled_text, parse_config, serialize
from .grid import Grid
from .potentials import PotentialKind, solve_eikonal
from .projection import InfeasibleProjection, PdParams, project_w1
from .simulator import SimulationError, replay_check, run
from .snapshots import (SnapshotFormatError, SnapshotSink, read_diagnostics, read_raw,
                        write_diagnostics, write_raw)
from .transport import CFLError

log = logging.getLogger("congestflow")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def _load_scenario(ref: str):
    path = Path(ref)
    if path.is_file():
        return parse_config(path.read_text(encoding="utf-8"))
    if ref in bundled_names():
        return parse_config(bundled_text(ref))
    raise UsageError(f"no config file {ref!r} and no bundled scenario of that name "
                     f"(bundled: {', '.join(bundled_names())})")


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


def cmd_run(args) -> int:
    sc = _load_scenario(args.config)
    if args.output_dir:
        sc = replace(sc, output_dir=args.output_dir)
    if args.auto_substep:
        sc = replace(sc, auto_substep=True)
    if args.snapshot_every is not None:
        if args.snapshot_every < 1:
            raise UsageError("--snapshot-every must be >= 1")
        sc = replace(sc, snapshot_every=args.snapshot_every)
    out = Path(sc.output_dir)
    sink = SnapshotSink(out, sc.formats, sc.grid)
    (out / "scenario.toml").write_text(serialize(sc), encoding="utf-8")
    meta = {"version": __version__, "config": args.config, "seed": args.seed,
            "area": sc.grid.area, "tol_feas": sc.pd.tol_feas, "steps": sc.n_steps}
    (out / "run.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")

    diags = run(sc, sink)
    diag_path = write_diagnostics(out / "diagnostics.csv", diags)
    if "png" in sc.formats:
        from .plotting import plot_diagnostics

        plot_diagnostics(out / "diagnostics.png", diags)
    n_proj = sum(1 for d in diags if d.pd_iters)
    n_bad = sum(1 for d in diags if not d.pd_converged)
    rep = replay_check(diags, feas_tol=sc.pd.tol_feas, area=sc.grid.area)
    _say(args, f"steps {len(diags) - 1}  projections {n_proj}  non-converged {n_bad}")
    _say(args, f"mass1 {diags[0].mass1:.10g} -> {diags[-1].mass1:.10g}  "
               f"outflux {diags[-1].outflux_cum:.10g}  mass2 {diags[-1].mass2:.10g}")
    _say(args, f"max rho1+rho2 {max(d.max_total_density for d in diags):.10g}")
    for line in rep.lines():
        _say(args, line)
    _say(args, f"diagnostics written to {diag_path}")
    if n_bad and args.strict:
        print(f"error: {n_bad} projections did not converge", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if rep.passed else EXIT_RUNTIME


def cmd_project(args) -> int:
    meta1, rho2 = read_raw(args.rho2)
    meta2, kappa = read_raw(args.kappa)
    if rho2.shape != kappa.shape or meta1["h"] != meta2["h"]:
        raise UsageError(f"grids differ: {rho2.shape} h={meta1['h']} vs "
                         f"{kappa.shape} h={meta2['h']}")
    grid = Grid(rho2.shape[0], rho2.shape[1], meta1["h"])
    params = PdParams(max_iters=args.max_iters, tol_primal=args.tol_primal, tol_feas=args.tol_feas)
    res = project_w1(grid, rho2, kappa, params)
    print(f"cost {res.transport_cost:.10g}")
    print(f"iters {res.iters}")
    print(f"converged {str(res.converged).lower()}")
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_raw(out / "rho2_projected.raw", res.rho2, grid.h, meta1["t"])
        write_raw(out / "pressure.raw", res.pressure, grid.h, meta1["t"])
    return EXIT_OK if res.converged else EXIT_RUNTIME


def cmd_eikonal(args) -> int:
    sc = _load_scenario(args.config)
    spec = sc.potential
    if spec.kind is not PotentialKind.EIKONAL:
        log.info("config potential is %s; using its exit set anyway", spec.kind.value)
    grid = sc.grid
    mask = spec.mask(grid)
    if not mask.any():
        raise UsageError("the exit set is empty")
    phi = solve_eikonal(grid, mask)
    out = Path(args.output_dir or sc.output_dir)
    sink = SnapshotSink(out, [f for f in sc.formats if f != "png"] or ["raw"], grid)
    sink.write_snapshot("phi", 0, 0.0, phi, vmax=max(float(phi.max()), 1e-300))
    _say(args, f"exit cells {int(mask.sum())}  max distance {phi.max():.10g}")
    _say(args, f"written to {out}")
    return EXIT_OK


def cmd_check(args) -> int:
    diags = read_diagnostics(args.diagnostics)
    area, tol = args.area, args.feas_tol
    meta_path = Path(args.diagnostics).with_name("run.json")
    if meta_path.is_file():
        meta = json.loads(meta_path.read_text())
        area = area if area is not None else meta.get("area")
        tol = tol if tol is not None else meta.get("tol_feas")
    rep = replay_check(diags, feas_tol=tol if tol is not None else 1e-6,
                       area=area if area is not None else 1.0)
    for line in rep.lines():
        print(line)
    return EXIT_OK if rep.passed else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--output-dir", help="directory for snapshots and diagnostics")
    common.add_argument("--auto-substep", action="store_true",
                        help="split time steps that violate the CFL bound instead of failing")
    common.add_argument("--seed", type=_u64, default=0,
                        help="recorded in run.json; the solver itself is deterministic")
    common.add_argument("--snapshot-every", type=int, help="steps between snapshots")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    p = _Parser(prog="congestflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", parents=[common], help="run a scenario (file or bundled name)")
    r.add_argument("config", help=f"config file or one of: {', '.join(bundled_names())}")
    r.add_argument("--strict", action="store_true",
                   help="exit with status 2 if any projection hit its iteration cap")
    r.set_defaults(func=cmd_run)

    pr = sub.add_parser("project", parents=[common], help="one W1 projection of RawGrid files")
    pr.add_argument("rho2")
    pr.add_argument("kappa")
    pr.add_argument("--max-iters", type=int, default=PdParams.max_iters)
    pr.add_argument("--tol-primal", type=float, default=PdParams.tol_primal)
    pr.add_argument("--tol-feas", type=float, default=PdParams.tol_feas)
    pr.set_defaults(func=cmd_project)

    e = sub.add_parser("eikonal", parents=[common], help="write the exit-distance potential")
    e.add_argument("config")
    e.set_defaults(func=cmd_eikonal)

    c = sub.add_parser("check", parents=[common], help="replay the checks on a diagnostics CSV")
    c.add_argument("diagnostics")
    c.add_argument("--area", type=float, help="domain area (default from run.json, else 1)")
    c.add_argument("--feas-tol", type=float, help="capacity tolerance (default from run.json)")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    if args.quiet:
        logging.getLogger().setLevel(logging.ERROR)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CFLError, InfeasibleProjection, SimulationError, SnapshotFormatError,
            OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
