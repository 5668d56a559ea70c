"""File formats shared by the command-line tools.

Floats are written with 17 significant digits, enough to round-trip any
binary64 value exactly.  JSON files carry non-finite numbers as ``null``.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .benchmark import RunRecord

__all__ = [
    "format_float",
    "write_table",
    "read_table",
    "write_series",
    "read_data",
    "read_initial",
    "read_impulse_response",
    "write_records",
    "read_records",
    "write_json",
    "RECORD_FIELDS",
]

RECORD_FIELDS = ("run_id", "N", "estimator", "fit", "iters", "converged", "wall_time")


def format_float(x) -> str:
    return format(float(x), ".17g")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer, str)):
        return str(v)
    return format_float(v)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_table(path, required: Sequence[str]) -> dict:
    """Columns of a CSV file as lists of strings, keyed by header name."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(required) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        cols = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name in cols:
                cols[name].append(row[name])
    return cols


def write_series(path, header: Sequence[str], *columns) -> None:
    write_table(path, header, zip(*columns))


def _floats(values, path, name) -> np.ndarray:
    try:
        return np.array([float(v) for v in values])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric value in column {name!r}") from exc


def _contiguous(t, start, path):
    expected = np.arange(start, start + len(t))
    if not np.array_equal(t, expected):
        raise ValueError(f"{path}: column t must run {start}, {start + 1}, ... without gaps")


def read_data(path):
    """``(u, y)`` from a CSV with columns ``t,u,y`` and ``t = 0, 1, ...``."""
    cols = read_table(path, ("t", "u", "y"))
    _contiguous(_floats(cols["t"], path, "t"), 0, path)
    return _floats(cols["u"], path, "u"), _floats(cols["y"], path, "y")


def read_initial(path, n: int) -> np.ndarray:
    """Past inputs ``u_{-n+1} .. u_{-1}`` from a CSV with columns ``t,u``."""
    cols = read_table(path, ("t", "u"))
    t = _floats(cols["t"], path, "t")
    if t.size != n - 1:
        raise ValueError(f"{path}: expected {n - 1} past samples, found {t.size}")
    order = np.argsort(t)
    _contiguous(t[order], -(n - 1), path)
    return _floats(cols["u"], path, "u")[order]


def read_impulse_response(path) -> np.ndarray:
    cols = read_table(path, ("k", "g"))
    _contiguous(_floats(cols["k"], path, "k"), 0, path)
    return _floats(cols["g"], path, "g")


def write_records(path, records: Sequence[RunRecord]) -> None:
    write_table(path, RECORD_FIELDS, ([getattr(r, f) for f in RECORD_FIELDS] for r in records))


def read_records(path) -> list:
    cols = read_table(path, RECORD_FIELDS)
    out = []
    for i in range(len(cols["run_id"])):
        out.append(RunRecord(
            run_id=int(cols["run_id"][i]),
            N=int(cols["N"][i]),
            estimator=cols["estimator"][i],
            fit=float(cols["fit"][i]),
            iters=int(cols["iters"][i]),
            converged=cols["converged"][i] == "true",
            wall_time=float(cols["wall_time"][i]),
        ))
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n")
