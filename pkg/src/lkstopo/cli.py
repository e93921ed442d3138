"""Command line entry point.

Subcommands::

    lkstopo verify taylor-couette [--scale S]
    lkstopo verify sensitivity [--scale S] [--fd-step H]
    lkstopo simulate CASE [--design init|reference|FILE] [--periods K]
    lkstopo optimize CASE
    lkstopo describe CASE

CASE is a path to a case file or the name of a shipped case.  Exit status is
0 on success, 1 when a verification fails or a run aborts, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

THREAD_ENV = "LKSTOPO_THREADS"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help=f"worker threads (default: ${THREAD_ENV} or 1)")
    common.add_argument("--output-dir", type=Path, default=Path("runs"), help="parent directory for run directories")
    common.add_argument("--seed", type=int, default=None, help="recorded in the run; overrides the case seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lkstopo", description="Moving-body fluid topology optimisation on a lattice kinetic solver.")
    sub = p.add_subparsers(dest="command", metavar="{verify,simulate,optimize,describe}")
    sub.required = True

    v = sub.add_parser("verify", parents=[common], help="run a verification scenario")
    v.add_argument("scenario", choices=("taylor-couette", "sensitivity"))
    v.add_argument("--scale", type=float, default=None, help="taylor-couette: 1, 0.5 or 0.25; sensitivity: linear grid factor")
    v.add_argument("--fd-step", type=float, default=1e-3)
    v.add_argument("--max-steps", type=int, default=None, help="solver step budget (taylor-couette)")

    s = sub.add_parser("simulate", parents=[common], help="run the flow for a fixed design")
    s.add_argument("case")
    s.add_argument("--design", default="init", help="'init', 'reference' or a .npy/.npz file with gamma")
    s.add_argument("--periods", type=int, default=1, help="repeat the case run length this many times")
    s.add_argument("--max-steps", type=int, default=None, help="override the solver steps per period")

    o = sub.add_parser("optimize", parents=[common], help="optimise a case")
    o.add_argument("case")
    o.add_argument("--max-steps", type=int, default=None, help="override the optimisation step limit")

    d = sub.add_parser("describe", parents=[common], help="print the fully resolved case file")
    d.add_argument("case")
    return p


def _threads(args) -> int:
    n = args.threads
    if n is None:
        env = os.environ.get(THREAD_ENV)
        if env:
            try:
                n = int(env)
            except ValueError:
                raise UsageError(f"{THREAD_ENV} must be an integer") from None
    if n is None:
        n = 1
    if n < 1:
        raise UsageError("--threads must be positive")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    from . import kernels

    kernels.set_threads(n)
    return n


def _run_dir(parent: Path, name: str) -> Path:
    parent.mkdir(parents=True, exist_ok=True)
    path = parent / name
    k = 1
    while path.exists():
        path = parent / f"{name}_{k}"
        k += 1
    path.mkdir()
    return path


def _load(case: str, args):
    from .config import ConfigError
    from .gallery import load_case

    try:
        cfg = load_case(case)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, optimizer=dataclasses.replace(cfg.optimizer, seed=args.seed))
    return cfg


def cmd_verify(args) -> int:
    from .verification import TC_SCALES, sensitivity_fda, taylor_couette

    if args.scenario == "taylor-couette":
        scale = 1.0 if args.scale is None else args.scale
        if scale not in TC_SCALES:
            raise UsageError(f"--scale must be one of {TC_SCALES} for taylor-couette")
        report = taylor_couette(scale, max_steps=args.max_steps, progress=_progress("steps"))
    else:
        scale = 0.5 if args.scale is None else args.scale
        if not 1e-4 <= args.fd_step <= 1e-2:
            raise UsageError("--fd-step must lie in [1e-4, 1e-2]")
        report = sensitivity_fda(scale, args.fd_step, workers=args.threads_resolved)
    run = _run_dir(args.output_dir, f"verify-{args.scenario}")
    (run / "report.txt").write_text(report.to_text())
    (run / "profile.csv").write_text(report.to_csv())
    sys.stdout.write(report.to_text())
    print(f"run directory: {run}")
    return EXIT_OK if report.passed else EXIT_FAIL


def _progress(label):
    log = logging.getLogger("lkstopo")

    def cb(n, residual):
        log.info("%s %d residual %.3e", label, n, residual)

    return cb


def _design_for(case, spec: str):
    import numpy as np

    if spec == "init":
        return case.new_design().physical
    if spec == "reference":
        try:
            return case.reference_design()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"design file {spec} not found")
    if path.suffix == ".npz":
        with np.load(path) as data:
            key = "gamma" if "gamma" in data else data.files[0]
            gamma = data[key]
    else:
        gamma = np.load(path)
    if gamma.shape != case.problem.design_grid.shape:
        raise UsageError(f"design in {spec} has shape {gamma.shape}, expected {case.problem.design_grid.shape}")
    return gamma


def cmd_simulate(args) -> int:
    import numpy as np

    from .config import describe
    from .forward import SolverDivergence, run_periods
    from .gallery import build_case
    from .vtk import write_vtk

    cfg = _load(args.case, args)
    if args.max_steps is not None:
        if args.max_steps < 1:
            raise UsageError("--max-steps must be positive")
        cfg = dataclasses.replace(cfg, solver=dataclasses.replace(cfg.solver, n_steps=args.max_steps), objective=dataclasses.replace(cfg.objective, window=()))
    if args.periods < 1:
        raise UsageError("--periods must be positive")
    case = build_case(cfg)
    gamma = _design_for(case, args.design)
    run = _run_dir(args.output_dir, f"simulate-{cfg.name}")
    (run / "case.cfg").write_text(describe(cfg))
    np.save(run / "gamma.npy", gamma)
    every = cfg.output.snapshot_every
    grid = case.problem.grid

    def snap(n, st):
        if n % every == 0:
            write_vtk(run / f"flow_{n:07d}.vtk", {"rho": st.rho, "u": st.u}, grid)

    t0 = time.perf_counter()
    try:
        values, state, series = run_periods(case.problem, gamma, case.objective, args.periods, snapshot=snap if every else None)
    except SolverDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    rows = list(enumerate(series))
    with open(run / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "integrand_mean"))
        w.writerows((n, repr(float(v))) for n, v in rows)
    with open(run / "objective.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("period", "J"))
        w.writerows((k, repr(float(v))) for k, v in enumerate(values))
    write_vtk(run / "flow_final.vtk", {"rho": state.rho, "u": state.u}, grid)
    summary = f"case={cfg.name}\ndesign={args.design}\nperiods={args.periods}\nJ_last={values[-1]!r}\nruntime_s={time.perf_counter() - t0:.3f}\n"
    (run / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    print(f"run directory: {run}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    import numpy as np

    from .config import describe
    from .gallery import build_case
    from .optimize import LoopControl, OptimizationAborted, optimization_loop
    from .vtk import write_vtk

    cfg = _load(args.case, args)
    if args.max_steps is not None:
        if args.max_steps < 1:
            raise UsageError("--max-steps must be positive")
        cfg = dataclasses.replace(cfg, optimizer=dataclasses.replace(cfg.optimizer, max_steps=args.max_steps))
    case = build_case(cfg)
    run = _run_dir(args.output_dir, f"optimize-{cfg.name}")
    (run / "case.cfg").write_text(describe(cfg))
    every = cfg.output.vtk_every
    dgrid = case.problem.design_grid

    def snap(rec, design):
        if every and rec.step % every == 0:
            write_vtk(run / f"gamma_{rec.step:05d}.vtk", {"gamma_raw": design.raw, "gamma": design.physical}, dgrid)

    t0 = time.perf_counter()
    try:
        result = optimization_loop(case, LoopControl.from_case(case), run, callback=snap)
    except OptimizationAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    design = result.design
    write_vtk(run / "gamma_final.vtk", {"gamma_raw": design.raw, "gamma_filtered": design.filtered, "gamma": design.physical}, dgrid)
    np.save(run / "gamma_final.npy", design.physical)
    last = result.final
    summary = (
        f"case={cfg.name}\nsteps={len(result.history)}\nconverged={str(result.converged).lower()}\n"
        f"J={last.J!r}\nG={last.G!r}\nbeta={last.beta!r}\nv_max={last.v_max!r}\n"
        f"runtime_s={time.perf_counter() - t0:.3f}\n"
    )
    (run / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    print(f"run directory: {run}")
    return EXIT_OK


def cmd_describe(args) -> int:
    from .config import describe

    sys.stdout.write(describe(_load(args.case, args)))
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "simulate": cmd_simulate, "optimize": cmd_optimize, "describe": cmd_describe}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.threads_resolved = _threads(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lkstopo: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE


def main_exit():  # pragma: no cover - console script
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_exit()
