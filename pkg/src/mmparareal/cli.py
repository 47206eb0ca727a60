"""Command-line experiment harness.

Subcommands: sweep-epsilon, sweep-k, sweep-dt (CSV convergence data),
verify (invariant checks), speedup (fine-stage timing report).

CSV goes to --out (default stdout) with the fixed header below; run metadata
(initial condition, substep, grids) goes to stderr so the CSV bytes depend
only on the experiment spec. Floats are written in shortest round-trip form.
A JSON config file (--config) can supply any long option (keys use
underscores, e.g. "delta_t_fine", plus "u0" and "quadratic_lambda");
explicit command-line flags win over the file.

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Optional

import multiprocessing
import numpy as np

from . import analysis, engine, verification
from .engine import AlgorithmVariant, PararealConfig
from .linalg import ExpOverflowError, NoConvergenceError, SingularMatrixError
from .propagators import NonFiniteStateError
from .systems import (
    builtin_brusselator,
    builtin_quadratic,
    builtin_toy,
)

CSV_HEADER = (
    "system,algorithm,coarse,fine,epsilon,dt,T,k,n,"
    "rel_macro_error,rel_micro_error,abs_macro_error,abs_micro_error"
)

SYSTEMS = ("toy", "quadratic", "brusselator")

DEFAULT_U0 = {
    "toy": [1.0, 0.0, 0.0],
    "quadratic": [1.0, 0.0],
    "brusselator": [1.0, 1.0, 3.0],
}

# 5 points per decade over [1e-5, 1e-1].
DEFAULT_EPS_GRID = [float(e) for e in np.logspace(-5, -1, 21)]

NUMERICAL_ERRORS = (
    NonFiniteStateError,
    SingularMatrixError,
    ExpOverflowError,
    NoConvergenceError,
)

CONFIG_KEYS = {
    "system", "algorithm", "coarse", "fine", "epsilons", "dt", "dts", "T",
    "kmax", "delta_t_fine", "out", "workers", "all_times", "u0",
    "quadratic_lambda",
}


class CliError(Exception):
    """Invalid arguments or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


@dataclass
class ExperimentSpec:
    command: str
    system: str
    algorithm: int
    coarse: str
    fine: str
    epsilons: list
    dt: float
    dts: Optional[list]
    t_final: float
    kmax: int
    substep: Optional[float]
    u0: list
    out: str
    workers: int
    all_times: bool
    quadratic_lambda: float


def _parse_float_list(value, what: str) -> list:
    if isinstance(value, str):
        parts = [s for s in value.split(",") if s.strip()]
        try:
            value = [float(s) for s in parts]
        except ValueError as exc:
            raise CliError(f"could not parse {what}: {exc}") from exc
    value = [float(v) for v in value]
    if not value:
        raise CliError(f"{what} must contain at least one value")
    if any(not (v > 0) for v in value):
        raise CliError(f"{what} entries must be positive")
    return value


def _default_kmax(command: str, algorithm: int, coarse: str) -> int:
    if command == "sweep-k":
        return {1: 8, 2: 30, 3: 8}[algorithm]
    if command == "speedup":
        return 6
    if command == "sweep-dt":
        return 3
    # sweep-epsilon: low iteration counts already show the rates.
    if algorithm == 1:
        return 2 if coarse == "exact" else 3
    return {2: 6, 3: 3}[algorithm]


def resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    """Merge flags over the config file over built-in defaults."""
    config = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"could not read config file: {exc}") from exc
        if not isinstance(config, dict):
            raise CliError("config file must hold a JSON object")
        unknown = set(config) - CONFIG_KEYS
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")

    def pick(name, default):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        return config.get(name, default)

    system = pick("system", "toy")
    if system not in SYSTEMS:
        raise CliError(f"unknown system {system!r} (choose from {SYSTEMS})")
    linear = system == "toy"

    algorithm = int(pick("algorithm", 2))
    if algorithm not in (1, 2, 3):
        raise CliError("algorithm must be 1, 2, or 3")
    if algorithm == 3 and not linear:
        raise CliError("algorithm 3 needs the linear coarse model (toy system)")

    coarse = pick("coarse", "exact" if linear else "euler")
    fine = pick("fine", "exact" if linear else "euler")
    for name, kind in (("coarse", coarse), ("fine", fine)):
        if kind not in ("exact", "euler"):
            raise CliError(f"{name} must be 'exact' or 'euler', got {kind!r}")
        if kind == "exact" and not linear:
            raise CliError(f"exact {name} propagator needs the linear model")

    default_eps = [1e-2] if args.command == "speedup" else DEFAULT_EPS_GRID
    epsilons = _parse_float_list(pick("epsilons", default_eps), "--epsilons")

    dt = float(pick("dt", 0.1))
    t_final = float(pick("T", 10.0))
    if not (dt > 0 and t_final > 0):
        raise CliError("dt and T must be positive")

    dts = pick("dts", None)
    if args.command == "sweep-dt":
        dts = _parse_float_list(
            dts if dts is not None else [0.2, 0.1, 0.05, 0.025], "--dts"
        )

    kmax = int(pick("kmax", _default_kmax(args.command, algorithm, coarse)))
    if kmax < 0:
        raise CliError("kmax must be >= 0")

    substep = pick("delta_t_fine", None)
    if substep is None and fine == "euler":
        # Sized so one speedup task is a visible chunk of work.
        substep = 2e-5 if args.command == "speedup" else 1e-5
    if substep is not None:
        substep = float(substep)
        if not (substep > 0):
            raise CliError("delta-t-fine must be positive")

    u0 = [float(v) for v in config.get("u0", DEFAULT_U0[system])]

    workers = pick("workers", None)
    if workers is None:
        workers = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") \
            else (os.cpu_count() or 1)
    workers = int(workers)
    if workers < 1:
        raise CliError("workers must be >= 1")

    return ExperimentSpec(
        command=args.command,
        system=system,
        algorithm=algorithm,
        coarse=coarse,
        fine=fine,
        epsilons=epsilons,
        dt=dt,
        dts=dts,
        t_final=t_final,
        kmax=kmax,
        substep=substep,
        u0=u0,
        out=str(pick("out", "-")),
        workers=workers,
        all_times=bool(pick("all_times", False)),
        quadratic_lambda=float(config.get("quadratic_lambda", 1.0)),
    )


def _build_system(spec: ExperimentSpec, epsilon: float):
    if spec.system == "toy":
        return builtin_toy(epsilon)
    if spec.system == "quadratic":
        return builtin_quadratic(spec.quadratic_lambda, epsilon)
    return builtin_brusselator(epsilon)


def _table_for(spec: ExperimentSpec, epsilon: float, dt: float):
    return analysis.experiment_table(
        _build_system(spec, epsilon),
        spec.system,
        AlgorithmVariant(spec.algorithm),
        spec.coarse,
        spec.fine,
        dt,
        spec.t_final,
        spec.kmax,
        np.array(spec.u0),
        substep=spec.substep,
    )


def _map_points(func, points, workers: int):
    """Ordered map over sweep points, one process per point if requested."""
    points = list(points)
    if workers > 1 and len(points) > 1:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            return list(pool.map(func, points))
    return [func(p) for p in points]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _emit_tables(tables, spec: ExperimentSpec) -> str:
    lines = [CSV_HEADER]
    for table in tables:
        n_final = table.n_intervals
        for k in range(table.n_iterations + 1):
            ns = range(n_final + 1) if spec.all_times else (n_final,)
            for n in ns:
                lines.append(
                    ",".join(
                        _fmt(v)
                        for v in (
                            table.system,
                            table.variant,
                            table.coarse,
                            table.fine,
                            table.epsilon,
                            table.dt,
                            table.t_final,
                            k,
                            n,
                            float(table.rel_macro[k, n]),
                            float(table.rel_micro[k, n]),
                            float(table.abs_macro[k, n]),
                            float(table.abs_micro[k, n]),
                        )
                    )
                )
    return "\n".join(lines) + "\n"


def _write_output(text: str, out: str):
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _print_metadata(spec: ExperimentSpec):
    print(
        f"# system={spec.system} algorithm={spec.algorithm} "
        f"coarse={spec.coarse} fine={spec.fine}",
        file=sys.stderr,
    )
    print(
        f"# u0={spec.u0} T={_fmt(spec.t_final)} dt={_fmt(spec.dt)} "
        f"substep={spec.substep} kmax={spec.kmax}",
        file=sys.stderr,
    )
    if spec.system == "quadratic":
        print(f"# quadratic_lambda={_fmt(spec.quadratic_lambda)}", file=sys.stderr)


def cmd_sweep_epsilon(spec: ExperimentSpec) -> int:
    _print_metadata(spec)
    tables = _map_points(
        partial(_table_for, spec, dt=spec.dt), spec.epsilons, spec.workers
    )
    _write_output(_emit_tables(tables, spec), spec.out)
    return 0


# Same row layout; sweep-k differs only in its defaults (large kmax, so the
# per-k columns trace convergence for each epsilon).
cmd_sweep_k = cmd_sweep_epsilon


def cmd_sweep_dt(spec: ExperimentSpec) -> int:
    _print_metadata(spec)
    epsilon = spec.epsilons[0]
    tables = _map_points(
        partial(_table_for, spec, epsilon), spec.dts, spec.workers
    )
    _write_output(_emit_tables(tables, spec), spec.out)
    return 0


def cmd_verify() -> int:
    results = verification.run_checks()
    for result in results:
        status = " ok " if result.ok else "FAIL"
        print(f"[{status}] {result.name}: {result.detail}")
    failed = sum(1 for r in results if not r.ok)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 3


def cmd_speedup(spec: ExperimentSpec) -> int:
    _print_metadata(spec)
    config = PararealConfig(
        system=_build_system(spec, spec.epsilons[0]),
        t_final=spec.t_final,
        dt=spec.dt,
        n_iterations=spec.kmax,
        variant=AlgorithmVariant(spec.algorithm),
        u0=np.array(spec.u0),
        micro_kind=spec.fine,
        macro_kind=spec.coarse,
        substep=spec.substep,
        with_reference=False,
    )
    n = config.n_intervals
    if spec.kmax == 0:
        print(f"N = {n} intervals; no iterations, ideal speed-up undefined")
        return 0

    ladder = [w for w in (1, 2, 4) if w <= spec.workers] or [1]
    print(f"N = {n} intervals, K = {spec.kmax} iterations")
    ideal = n / spec.kmax
    print(f"ideal speed-up N/K = {analysis.format_ideal_speedup(ideal)}")
    for w in ladder:
        report = analysis.speedup_report(engine.run(config, workers=w))
        print(
            f"workers={w}  fine-stage wall {report.fine_wall_seconds:.3f} s  "
            f"task-sum {report.fine_task_seconds:.3f} s  "
            f"measured ratio {report.measured_ratio:.2f}"
        )
    return 0


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--system", choices=SYSTEMS)
    common.add_argument("--algorithm", type=int)
    common.add_argument("--coarse", choices=("exact", "euler"))
    common.add_argument("--fine", choices=("exact", "euler"))
    common.add_argument("--epsilons", help="comma-separated epsilon values")
    common.add_argument("--dt", type=float)
    common.add_argument("--dts", help="comma-separated dt values (sweep-dt)")
    common.add_argument("--T", type=float)
    common.add_argument("--kmax", type=int)
    common.add_argument("--delta-t-fine", dest="delta_t_fine", type=float)
    common.add_argument("--out")
    common.add_argument("--workers", type=int)
    common.add_argument("--all-times", dest="all_times",
                        action="store_const", const=True)
    common.add_argument("--config")

    parser = _Parser(prog="mmparareal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep-epsilon", parents=[common],
                   help="errors vs epsilon at fixed dt")
    sub.add_parser("sweep-k", parents=[common],
                   help="errors vs iteration count for each epsilon")
    sub.add_parser("sweep-dt", parents=[common],
                   help="errors vs dt at fixed epsilon")
    sub.add_parser("speedup", parents=[common],
                   help="fine-stage timing at several worker counts")
    sub.add_parser("verify", help="run the invariant checks")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "verify":
            return cmd_verify()
        try:
            spec = resolve_spec(args)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        dispatch = {
            "sweep-epsilon": cmd_sweep_epsilon,
            "sweep-k": cmd_sweep_k,
            "sweep-dt": cmd_sweep_dt,
            "speedup": cmd_speedup,
        }
        try:
            return dispatch[args.command](spec)
        except ValueError as exc:
            # Config-shaped problems surfacing from the library layer.
            raise CliError(str(exc)) from exc
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
