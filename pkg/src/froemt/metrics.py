"""Trace comparison: relative L2 errors, node/generator averages, sweep tables."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import os

import numpy as np

from .simulation import SimulationConfig, reference_run, run

__all__ = [
    "MetricsError",
    "SignalTrace",
    "ErrorReport",
    "ComparisonRow",
    "resample_common",
    "relative_error",
    "voltage_error",
    "rotor_angle_error",
    "compare_runs",
    "comparison_table",
    "format_table",
    "table_csv",
    "worker_count",
    "fundamental_magnitude",
    "bus_magnitudes",
]

TIME_ATOL = 1e-12


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class SignalTrace:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise MetricsError("times and values must be 1-D of equal length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise MetricsError("time stamps must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_record(cls, record, name):
        return cls(record.times, record.column(name))


def _match(ta, tb, atol=TIME_ATOL):
    """Index pairs (ia, ib) of time stamps equal within `atol`."""
    j = np.searchsorted(tb, ta)
    j_lo = np.clip(j - 1, 0, len(tb) - 1)
    j_hi = np.clip(j, 0, len(tb) - 1)
    pick = np.where(np.abs(tb[j_lo] - ta) <= np.abs(tb[j_hi] - ta), j_lo, j_hi)
    ok = np.abs(tb[pick] - ta) <= atol
    return np.flatnonzero(ok), pick[ok]


def resample_common(a, b):
    """Value pairs of `a` and `b` at their shared time stamps.

    Returns ``(times, a_values, b_values)``.  No interpolation is done.
    """
    if len(a.times) == 0 or len(b.times) == 0:
        raise MetricsError("empty trace")
    ia, ib = _match(a.times, b.times)
    if ia.size == 0:
        raise MetricsError("traces share no time instants")
    return a.times[ia], a.values[ia], b.values[ib]


def relative_error(x_com, x_ref):
    """Percent L2 error of `x_com` against `x_ref` over common instants."""
    _, c, r = resample_common(x_com, x_ref)
    return _rel(c, r)


def _rel(c, r):
    den = np.linalg.norm(r)
    if den == 0:
        raise MetricsError("reference trace has zero norm")
    return 100.0 * float(np.linalg.norm(c - r) / den)


@dataclass
class ErrorReport:
    """Per-signal errors and their node / generator averages (percent)."""

    per_signal: dict = field(default_factory=dict)
    err_v: float = float("nan")
    err_delta: float = float("nan")
    n_node: int = 0
    n_gen: int = 0

    def lines(self):
        out = []
        if self.n_node:
            out.append(f"ERR(v)     = {self.err_v:.6g} %  ({self.n_node} nodes)")
        if self.n_gen:
            out.append(f"ERR(delta) = {self.err_delta:.6g} %  ({self.n_gen} generators)")
        return out


def _common_rows(run_rec, ref_rec):
    a, b = run_rec.grid(), ref_rec.grid()
    ia, ib = _match(a.times, b.times)
    if ia.size == 0:
        raise MetricsError("runs share no grid instants")
    return a, b, ia, ib


def _per_signal(run_rec, ref_rec, names, unwrap=False):
    a, b, ia, ib = _common_rows(run_rec, ref_rec)
    errs = {}
    for name in names:
        try:
            ca, cb = a.column(name), b.column(name)
        except KeyError as exc:
            raise MetricsError(f"missing signal: {exc}") from None
        if unwrap:
            ca, cb = np.unwrap(ca), np.unwrap(cb)
        errs[name] = _rel(ca[ia], cb[ib])
    return errs


def voltage_error(run_rec, ref_rec):
    """Mean per-node voltage error over all phase nodes of the reference."""
    names = ref_rec.voltage_names()
    if not names:
        raise MetricsError("no voltage signals recorded")
    errs = _per_signal(run_rec, ref_rec, names)
    return float(np.mean(list(errs.values()))), errs


def rotor_angle_error(run_rec, ref_rec):
    """Mean per-generator rotor angle error (angles unwrapped first)."""
    names = ref_rec.angle_names()
    if not names:
        raise MetricsError("no rotor angle signals recorded")
    errs = _per_signal(run_rec, ref_rec, names, unwrap=True)
    return float(np.mean(list(errs.values()))), errs


def compare_runs(run_rec, ref_rec, voltages=True, rotor_angles=True):
    rep = ErrorReport()
    if voltages:
        rep.err_v, e = voltage_error(run_rec, ref_rec)
        rep.per_signal.update(e)
        rep.n_node = len(e)
    if rotor_angles:
        rep.err_delta, e = rotor_angle_error(run_rec, ref_rec)
        rep.per_signal.update(e)
        rep.n_gen = len(e)
    return rep


def fundamental_magnitude(times, values, frequency=60.0, cycles=1):
    """Fundamental amplitude over consecutive windows of `cycles` periods.

    Each window is fitted by least squares with ``a cos + b sin + c`` at
    `frequency`; the result is ``hypot(a, b)`` per window.  Works for any
    number of samples per period.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    span = cycles / frequency
    n_win = int(np.floor((t[-1] - t[0]) / span + 1e-9))
    if n_win < 1:
        raise MetricsError("trace shorter than one window")
    w = 2 * np.pi * frequency
    out = np.empty(n_win)
    for k in range(n_win):
        lo = t[0] + k * span
        sel = (t >= lo - TIME_ATOL) & (t < lo + span - TIME_ATOL)
        a = np.column_stack([np.cos(w * t[sel]), np.sin(w * t[sel]), np.ones(sel.sum())])
        coef = np.linalg.lstsq(a, v[sel], rcond=None)[0]
        out[k] = np.hypot(coef[0], coef[1])
    return out


def bus_magnitudes(record, frequency=60.0, cycles=1):
    """Per-bus fundamental magnitude windows, averaged over the three phases."""
    grid = record.grid()
    buses = {}
    for name in grid.voltage_names():
        buses.setdefault(name.split(":")[1], []).append(
            fundamental_magnitude(grid.times, grid.column(name), frequency, cycles))
    return {b: np.mean(v, axis=0) for b, v in buses.items()}


@dataclass(frozen=True)
class ComparisonRow:
    step_us: int
    scheme: str
    err_v: float
    err_delta: float
    wall_s: float
    steps: int

    @property
    def per_step_us(self):
        return 1e6 * self.wall_s / self.steps


def worker_count(n_jobs):
    """Parallel workers for a sweep, capped by FROEMT_THREADS if set."""
    cap = os.cpu_count() or 1
    env = os.environ.get("FROEMT_THREADS")
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise MetricsError(f"FROEMT_THREADS must be an integer, got {env!r}") from None
    return max(1, min(cap, n_jobs))


def _run_job(args):
    case, cfg = args
    return run(case, cfg)


def comparison_table(case, steps_us, schemes=("fro", "trap"), t_end=2.0, reference=None,
                     workers=None, runs_out=None):
    """Run every (step, scheme) pair and compare against the reference.

    `reference` is a RunRecord; when None the 5 microsecond trapezoidal run
    is computed.  `runs_out`, if a dict, receives the RunRecords.
    """
    if reference is None:
        reference = reference_run(case, t_end)
    jobs = [(int(h), s) for h in steps_us for s in schemes]
    cfgs = [(case, SimulationConfig(h, t_end, s)) for h, s in jobs]
    n = workers or worker_count(len(jobs))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            records = list(pool.map(_run_job, cfgs))
    else:
        records = [_run_job(c) for c in cfgs]
    rows = []
    for (h, s), rec in zip(jobs, records):
        rep = compare_runs(rec, reference)
        rows.append(ComparisonRow(h, s, rep.err_v, rep.err_delta, rec.meta["wall_time_s"],
                                  rec.meta["steps"]))
        if runs_out is not None:
            runs_out[(h, s)] = rec
    return rows


_HEAD = ("step_us", "scheme", "err_v_pct", "err_delta_pct", "wall_s", "per_step_us")


def format_table(rows):
    """Aligned text table; wall-clock columns are informative only."""
    lines = ["{:>8} {:>6} {:>14} {:>14} {:>9} {:>11}".format(*_HEAD)]
    for r in rows:
        lines.append(f"{r.step_us:>8d} {r.scheme:>6} {r.err_v:>14.6g} {r.err_delta:>14.6g} "
                     f"{r.wall_s:>9.3f} {r.per_step_us:>11.1f}")
    return "\n".join(lines)


def table_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_HEAD)
    for r in rows:
        w.writerow([r.step_us, r.scheme, repr(r.err_v), repr(r.err_delta),
                    f"{r.wall_s:.6f}", f"{r.per_step_us:.3f}"])
    return buf.getvalue()
