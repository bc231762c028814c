"""Command-line entry point: ``ncspectral {simulate,sweep,ising,moyal-check}``."""

from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np
import yaml

from . import ising, moyal
from .model import Dim, ParamError
from .runner import (
    FIGURE_PRESETS,
    ConfigError,
    SweepSpec,
    parse_config,
    point_dirname,
    preset_spec,
    run_sweep_spec,
    with_overrides,
)
from .sampler import RunPlan, Start


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sweeps", type=int, help="measurement sweeps per point")
    p.add_argument("--therm", type=int, help="thermalization sweeps (default: by N)")
    p.add_argument("--interval", type=int, help="sweeps between measurements")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--start", choices=[s.value for s in Start])
    p.add_argument("--out", help="output directory")
    p.add_argument("--resume", action="store_true", help="skip finished points, continue from checkpoints")
    p.add_argument("--dry-run", action="store_true", help="print the resolved spec and job list, run nothing")
    p.add_argument("--workers", type=int, help="worker processes (default: env NCSPECTRAL_WORKERS or all cores)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ncspectral", description="Monte Carlo for the truncated spectral-action matrix model.")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a single parameter point")
    sim.add_argument("--dim", type=int, choices=[2, 4], default=2)
    sim.add_argument("--n", type=int, default=5)
    sim.add_argument("--omega", type=float, default=1.0)
    sim.add_argument("--mu", type=float, default=1.0)
    sim.add_argument("--alpha", type=float, default=0.0)
    _add_run_flags(sim)

    sw = sub.add_parser("sweep", help="run a parameter grid from a config file or figure preset")
    src = sw.add_mutually_exclusive_group(required=True)
    src.add_argument("config", nargs="?", help="YAML sweep config")
    src.add_argument("--figure", choices=sorted(FIGURE_PRESETS), help="named preset grid")
    _add_run_flags(sw)

    isg = sub.add_parser("ising", help="2D Ising beta scan (calibration), CSV to stdout or --out")
    isg.add_argument("--l", type=int, default=16)
    isg.add_argument("--beta-min", type=float, default=0.30)
    isg.add_argument("--beta-max", type=float, default=0.55)
    isg.add_argument("--beta-step", type=float, default=0.01)
    isg.add_argument("--sweeps", type=int, default=20000)
    isg.add_argument("--therm", type=int, default=2000)
    isg.add_argument("--seed", type=int, default=0)
    isg.add_argument("--out")

    mc = sub.add_parser("moyal-check", help="matrix-basis trace/orthogonality residual table")
    mc.add_argument("--max-index", type=int, default=4)
    mc.add_argument("--theta", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    mc.add_argument("--n-rho", type=int, default=200)
    mc.add_argument("--n-phi", type=int, default=64)
    mc.add_argument("--tol", type=float, default=moyal.DEFAULT_TOL)
    mc.add_argument("--out")
    return ap


def _apply_run_flags(spec: SweepSpec, args) -> SweepSpec:
    return with_overrides(
        spec,
        meas_sweeps=args.sweeps,
        therm_sweeps=args.therm,
        meas_interval=args.interval,
        seed=args.seed,
        start=Start(args.start) if args.start else None,
        output=args.out,
    )


def _run(spec: SweepSpec, args) -> int:
    try:
        points = spec.points()
        for n in spec.n_list:
            spec.plan_for(n)
    except (ParamError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.dry_run:
        sys.stdout.write(yaml.safe_dump(spec.as_dict(), sort_keys=False))
        print(f"# {len(points)} jobs")
        for p in points:
            plan = spec.plan_for(p.n)
            print(f"{point_dirname(p)}  therm={plan.therm_sweeps} meas={plan.meas_sweeps}")
        return 0
    return run_sweep_spec(spec, resume=args.resume, workers=args.workers)


def cmd_simulate(args) -> int:
    try:
        dim = Dim(args.dim)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    spec = SweepSpec(
        dim=dim, n_list=(args.n,), omega_grid=(args.omega,), mu_grid=(args.mu,),
        alpha_grid=(args.alpha,), therm_sweeps=None,
    )
    if args.out is None:
        args.out = "runs/simulate"
    return _run(_apply_run_flags(spec, args), args)


def cmd_sweep(args) -> int:
    try:
        spec = preset_spec(args.figure) if args.figure else parse_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return _run(_apply_run_flags(spec, args), args)


def _emit(header, rows, out) -> None:
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    finally:
        if out:
            fh.close()


def cmd_ising(args) -> int:
    count = int(math.floor((args.beta_max - args.beta_min) / args.beta_step + 1e-9)) + 1
    betas = np.round(args.beta_min + args.beta_step * np.arange(count), 12)
    plan = RunPlan(args.therm, args.sweeps, 1, args.seed)
    results = ising.beta_scan(args.l, betas, plan)
    _emit(ising.SCAN_COLUMNS, ising.scan_rows(results), args.out)
    return 0


def cmd_moyal(args) -> int:
    grid = moyal.GridSpec(args.n_rho, args.n_phi)
    rows = moyal.residual_table(args.max_index, tuple(args.theta), grid)
    _emit(moyal.RESIDUAL_COLUMNS, rows, args.out)
    worst = max(r[6] for r in rows)
    print(f"max residual {worst:.3e} (tol {args.tol:g})", file=sys.stderr)
    return 0 if worst <= args.tol else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"simulate": cmd_simulate, "sweep": cmd_sweep, "ising": cmd_ising, "moyal-check": cmd_moyal}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
