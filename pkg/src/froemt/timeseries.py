"""CSV export and import of run records.

Layout::

    #meta scheme="fro"
    #meta step_us=1000
    ...
    t,v:4:A,v:4:B,...
    0,1.0258...,...

Metadata values are JSON.  Numbers are written with 17 significant digits,
so a round trip is bit exact.
"""

import json
import math
from pathlib import Path

import numpy as np

from .simulation import RunRecord

__all__ = ["TimeSeriesError", "export_csv", "import_csv", "dumps", "loads"]


class TimeSeriesError(ValueError):
    pass


def _fmt(v):
    return format(float(v), ".17g")


# run-to-run varying entries stay out of the file so output is reproducible
VOLATILE_META = ("wall_time_s",)


def dumps(record):
    """CSV text of `record` (without the volatile metadata entries)."""
    meta = {k: v for k, v in record.meta.items() if k not in VOLATILE_META}
    half_rows = np.flatnonzero(record.half_step).tolist()
    meta["half_step_rows"] = half_rows
    lines = [f"#meta {k}={json.dumps(meta[k], sort_keys=True)}" for k in sorted(meta)]
    lines.append(",".join(["t"] + list(record.names)))
    vals = np.asarray(record.values, dtype=float).reshape(len(record.times), len(record.names))
    for t, row in zip(record.times, vals):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def export_csv(record, path):
    if not np.all(np.isfinite(record.values)) or not np.all(np.isfinite(record.times)):
        raise TimeSeriesError("record holds non-finite values")
    Path(path).write_text(dumps(record), newline="\n")


def _parse_float(tok, where):
    try:
        v = float(tok)
    except ValueError:
        raise TimeSeriesError(f"{where}: not a number: {tok!r}") from None
    if not math.isfinite(v):
        raise TimeSeriesError(f"{where}: non-finite value {tok!r}")
    return v


def loads(text):
    """Parse CSV text produced by :func:`dumps`."""
    meta = {}
    header = None
    rows = []
    for lineno, line in enumerate(text.split("\n"), 1):
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("#meta "):
                key, sep, val = line[6:].partition("=")
                if not sep:
                    raise TimeSeriesError(f"line {lineno}: malformed meta line")
                try:
                    meta[key.strip()] = json.loads(val)
                except json.JSONDecodeError:
                    raise TimeSeriesError(f"line {lineno}: bad meta value") from None
            continue
        fields = line.split(",")
        if header is None:
            if fields[0] != "t" or any(not f for f in fields) or len(set(fields)) != len(fields):
                raise TimeSeriesError(f"line {lineno}: malformed header")
            header = fields
            continue
        if len(fields) != len(header):
            raise TimeSeriesError(f"line {lineno}: expected {len(header)} fields, "
                                  f"got {len(fields)}")
        rows.append([_parse_float(f, f"line {lineno}") for f in fields])
    if header is None:
        raise TimeSeriesError("missing header")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    times = data[:, 0].copy()
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise TimeSeriesError("time column must be strictly increasing")
    half = np.zeros(len(times), dtype=bool)
    half_rows = meta.pop("half_step_rows", None)
    if half_rows is not None:
        half[np.asarray(half_rows, dtype=int)] = True
    elif "step_us" in meta:
        steps = times * 1e6 / meta["step_us"]
        half = np.abs(steps - np.round(steps)) > 1e-6
    return RunRecord(times, header[1:], data[:, 1:].copy(), half, meta)


def import_csv(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TimeSeriesError(f"cannot read {path}: {exc}") from exc
    return loads(text)
