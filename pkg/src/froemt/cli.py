"""Command-line interface: ``froemt run|compare|sweep|coeffs|odebench``."""

import argparse
from functools import reduce
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .case import CaseParseError, CaseValidationError, load_case
from .engine import ConvergenceError, Scheme
from .integrators import IntegratorError, IntegratorKind, coefficients, relative_error
from .metrics import MetricsError, comparison_table, compare_runs, format_table, table_csv
from .network import NetworkError
from .powerflow import PowerFlowError
from .simulation import REFERENCE_STEP_US, SimulationConfig, SimulationError, run
from .timeseries import TimeSeriesError, export_csv, import_csv

log = logging.getLogger("froemt")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_CONVERGENCE = 4
EXIT_IO = 5


class UsageError(Exception):
    pass


class HashMismatch(Exception):
    pass


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("step sizes must be positive integers")
    return vals


def _signals(text):
    groups = tuple(g.strip() for g in text.split(",") if g.strip())
    bad = set(groups) - {"voltages", "machines", "currents"}
    if bad:
        raise argparse.ArgumentTypeError(f"unknown signal groups: {sorted(bad)}")
    return groups


def build_parser():
    p = argparse.ArgumentParser(prog="froemt", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="log progress (-vv for debug output)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a case and write a CSV")
    r.add_argument("case", help="case file or the name of a shipped case (wscc9)")
    r.add_argument("--step-us", type=int, required=True)
    r.add_argument("--scheme", choices=[s.value for s in Scheme], default="fro")
    r.add_argument("--t-end", type=float, default=2.0)
    r.add_argument("--out", required=True)
    r.add_argument("--k", type=float, default=None, help="override load allocation factor")
    r.add_argument("--signals", type=_signals, default=("voltages", "machines"),
                   help="comma list of voltages, machines, currents")

    c = sub.add_parser("compare", help="errors of a test run against a reference run")
    c.add_argument("--ref", required=True)
    c.add_argument("--test", required=True)
    c.add_argument("--voltages", action="store_true")
    c.add_argument("--rotor-angles", action="store_true")
    c.add_argument("--per-signal", action="store_true", help="also list every signal")
    c.add_argument("--force", action="store_true", help="ignore case hash mismatch")

    s = sub.add_parser("sweep", help="error table over step sizes and schemes")
    s.add_argument("case")
    s.add_argument("--steps-us", type=_int_list, required=True)
    s.add_argument("--t-end", type=float, default=2.0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--schemes", default="fro,trap")
    s.add_argument("--ref", default=None, help="reuse a reference CSV instead of computing it")

    k = sub.add_parser("coeffs", help="integrator coefficients and relative error")
    k.add_argument("--kind", required=True)
    k.add_argument("--step-us", type=float, required=True)
    k.add_argument("--omega", type=float, default=2 * math.pi * 60)

    sub.add_parser("odebench", help="scalar test-equation benchmarks")
    return p


def _cmd_run(args):
    case = load_case(args.case)
    cfg = SimulationConfig(args.step_us, args.t_end, args.scheme, args.signals)
    rec = run(case, cfg, k=args.k)
    export_csv(rec, args.out)
    print(f"wrote {len(rec)} instants x {len(rec.names)} signals to {args.out}")
    for ev in rec.meta["events"]:
        print(f"  event: {ev}")
    return EXIT_OK


def _cmd_compare(args):
    ref = import_csv(args.ref)
    test = import_csv(args.test)
    h_ref, h_test = ref.meta.get("case_hash"), test.meta.get("case_hash")
    if h_ref != h_test and not args.force:
        raise HashMismatch(f"case hash differs ({h_test} vs reference {h_ref}); "
                           "use --force to compare anyway")
    both = not (args.voltages or args.rotor_angles)
    rep = compare_runs(test, ref, voltages=args.voltages or both,
                       rotor_angles=args.rotor_angles or both)
    for line in rep.lines():
        print(line)
    if args.per_signal:
        for name, e in rep.per_signal.items():
            print(f"  {name:<16} {e:.6g} %")
    return EXIT_OK


def _cmd_sweep(args):
    case = load_case(args.case)
    schemes = [Scheme(s.strip()).value for s in args.schemes.split(",") if s.strip()]
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise TimeSeriesError(f"cannot create {out}: {exc}") from exc
    if args.ref:
        ref = import_csv(args.ref)
        if ref.meta.get("case_hash") != case.hash:
            raise HashMismatch("reference CSV was produced from a different case")
    else:
        # keep only reference instants that can coincide with a test grid
        stride = reduce(math.gcd, args.steps_us)
        if stride % REFERENCE_STEP_US:
            raise UsageError(f"steps must be multiples of {REFERENCE_STEP_US} us")
        cfg = SimulationConfig(REFERENCE_STEP_US, args.t_end, Scheme.TRAP,
                               record_stride=stride // REFERENCE_STEP_US)
        log.info("computing the %d us reference", REFERENCE_STEP_US)
        ref = run(case, cfg)
        export_csv(ref, out / "reference.csv")
    runs = {}
    rows = comparison_table(case, args.steps_us, schemes, args.t_end, reference=ref,
                            runs_out=runs)
    for (h, s), rec in runs.items():
        export_csv(rec, out / f"{s}_{h}us.csv")
    text = format_table(rows)
    (out / "report.txt").write_text(text + "\n(wall-clock columns are informative only)\n")
    (out / "report.csv").write_text(table_csv(rows))
    print(text)
    return EXIT_OK


def _cmd_coeffs(args):
    kind = IntegratorKind.parse(args.kind)
    h = args.step_us / 1e6
    c = coefficients(kind, h, args.omega if kind.needs_omega else 0.0)
    e = abs(complex(relative_error(c, 1j * args.omega)))
    print(f"kind      {kind.value}")
    print(f"h         {h:.17g}")
    for name in ("b0", "b_m1", "c0", "c_m1"):
        print(f"{name:<9} {getattr(c, name):.17g}")
    print(f"|relative_error(j{args.omega:g})| {e:.6e}")
    return EXIT_OK


def _cmd_odebench(args):
    from .odebench import run_all

    for line in run_all():
        print(line)
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "compare": _cmd_compare, "sweep": _cmd_sweep,
             "coeffs": _cmd_coeffs, "odebench": _cmd_odebench}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, IntegratorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CaseValidationError, SimulationError, HashMismatch, MetricsError,
            NetworkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceError, PowerFlowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (CaseParseError, TimeSeriesError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
