"""Command-line entry point.

Usage::

    synchro simulate    [--params P] [--scenario S] [--models M,...] [--out DIR] [overrides]
    synchro compare     [--params P] [--scenario S] [--models M,...] [--out DIR] [overrides]
    synchro equilibrium [--params P] [--scenario S] [--out FILE]
    synchro constants   [--params P] [--out FILE]
    synchro validate    [--params P] [--scenario S]

``--params`` is a parameter file or ``tableII`` (default); ``--scenario``
is a scenario file or one of ``case1`` (default), ``case2`` and
``case2-compressed``.  Overrides: ``--dt``, ``--method``, ``--duration``.

Exit status: 0 on success, 1 on invalid input, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .exceptions import ConvergenceError, DivergenceError, FileError, SynchroError
from .harness import (
    REFERENCE, Scenario, compare, export_csv, load_scenario, prepare, simulate,
)
from .models import HIGH_ORDER_STATES, MODEL_KINDS
from .params import derive_constants, dump_constants, load_parameters, validate_parameters
from .solver import METHODS

VERBS = ("simulate", "compare", "equilibrium", "constants", "validate")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="synchro", description="Synchronous-machine model library and simulator.",
                 add_help=True)
    ap.add_argument("verb", choices=VERBS)
    ap.add_argument("--params", default="tableII", help="parameter file or 'tableII'")
    ap.add_argument("--scenario", default="case1", help="scenario file or case1 | case2 | case2-compressed")
    ap.add_argument("--models", default=None, help=f"comma-separated subset of {','.join(MODEL_KINDS)}")
    ap.add_argument("--out", default=None, help="output directory (simulate/compare) or file")
    ap.add_argument("--dt", type=float, default=None, help="integration step [s]")
    ap.add_argument("--method", choices=METHODS, default=None)
    ap.add_argument("--duration", type=float, default=None, help="truncate the scenario [s]")
    return ap


def _scenario(args) -> Scenario:
    sc = load_scenario(args.scenario)
    if args.duration is not None:
        # events at or beyond the new end are dropped
        sc = replace(sc, duration=args.duration, events=tuple(e for e in sc.events if e.t < args.duration))
    if args.models:
        sc = replace(sc, models=tuple(m.strip() for m in args.models.split(",") if m.strip()))
    overrides = {k: v for k, v in (("dt", args.dt), ("method", args.method)) if v is not None}
    return sc.with_config(**overrides) if overrides else sc


def _out_dir(args) -> Optional[Path]:
    if args.out is None:
        return None
    path = Path(args.out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FileError(f"cannot create {path}: {exc}") from exc
    return path


def _write(text: str, out: Optional[str]):
    sys.stdout.write(text)
    if out is not None:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise FileError(f"cannot write {out}: {exc}") from exc


def _run(args) -> int:
    p = load_parameters(args.params)

    if args.verb == "constants":
        _write(dump_constants(derive_constants(p)), args.out)
        return 0

    if args.verb == "validate":
        problems = validate_parameters(p)
        sc = _scenario(args)
        for line in problems:
            print(f"invalid: {line}")
        if problems:
            return 1
        print(f"parameters ok; scenario {sc.name}: {len(sc.events)} event(s), {sc.duration:g} s")
        return 0

    problems = validate_parameters(p)
    if problems:
        for line in problems:
            print(f"invalid: {line}", file=sys.stderr)
        return 1
    sc = _scenario(args)

    if args.verb == "equilibrium":
        plan = prepare(sc, p)
        eq = plan.equilibrium
        lines = [f"P_L = {sc.initial_load.P_L!r}", f"Q_L = {sc.initial_load.Q_L!r}",
                 f"V_r_s = {plan.params.V_r_s!r}", f"P_c = {plan.params.P_c!r}"]
        lines += [f"{n} = {float(v)!r}" for n, v in zip(HIGH_ORDER_STATES, eq.y)]
        lines += [f"V_l = {eq.bus.V_l!r}", f"delta_l = {eq.bus.delta_l!r}",
                  f"rhs_residual = {eq.rhs_residual!r}", f"bus_residual = {eq.bus_residual!r}"]
        _write("\n".join(lines) + "\n", args.out)
        return 0

    out = _out_dir(args)
    plan = prepare(sc, p)
    kinds = list(sc.models)
    if args.verb == "compare" and REFERENCE not in kinds:
        kinds.insert(0, REFERENCE)
    trajectories, failed = {}, []
    for kind in kinds:
        traj = simulate(kind, sc, plan, strict=False)
        trajectories[kind] = traj
        if not traj.complete:
            failed.append(kind)
            print(f"{kind}: integration stopped at t = {traj.t[-1] if len(traj) else 0:g} s: {traj.message}",
                  file=sys.stderr)
        if out is not None:
            export_csv(traj, out / f"{kind}.csv")
    if args.verb == "compare":
        ref = trajectories[REFERENCE]
        if not ref.complete:
            return 2
        report = compare({k: v for k, v in trajectories.items() if k in sc.models}, ref)
        _write(report.to_text(), str(out / "rmse.txt") if out is not None else None)
    else:
        for kind, traj in trajectories.items():
            if len(traj):
                print(f"{kind}: {len(traj)} samples, final omega = {traj.omega[-1]:.9g} rad/s, "
                      f"V_s = {traj.V_s[-1]:.9g} pu")
    return 2 if failed else 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"synchro: error: {exc}", file=sys.stderr)
        return 1
    try:
        return _run(args)
    except (ConvergenceError, DivergenceError) as exc:
        print(f"synchro: numerical failure: {exc}", file=sys.stderr)
        return 2
    except SynchroError as exc:
        print(f"synchro: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
