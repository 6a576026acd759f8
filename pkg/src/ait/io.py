"""On-disk formats: instance bundles (CSV + meta.json), trace CSV, report JSON.

Floats are written with 17 significant digits so every value round-trips
exactly, which keeps regenerated bundles byte-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .engine import IterationRecord
from .errors import AITError, IncompleteTrace
from .problem import ProblemInstance, normalize_columns, truth_from_signal

__all__ = [
    "write_bundle",
    "load_bundle",
    "read_matrix_csv",
    "read_vector_csv",
    "write_trace_csv",
    "read_trace_csv",
    "dump_json",
]

SCHEMA_VERSION = 1
TRACE_COLUMNS = ("t", "tau", "support", "linf_err")


def _fmt(v):
    return format(float(v), ".17g")


def _write_matrix(path, a):
    with open(path, "w", newline="") as fh:
        for row in np.atleast_2d(a):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_vector(path, v):
    with open(path, "w", newline="") as fh:
        for value in v:
            fh.write(_fmt(value) + "\n")


def _parse_rows(path):
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise AITError(f"{path}:{lineno}: {exc}") from None
    return rows


def read_matrix_csv(path):
    rows = _parse_rows(path)
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        bad = next(i for i, r in enumerate(rows, 1) if len(r) != len(rows[0]))
        raise AITError(f"{path}:{bad}: expected {len(rows[0])} columns, got {len(rows[bad - 1])}")
    return np.array(rows, dtype=np.float64)


def read_vector_csv(path):
    rows = _parse_rows(path)
    for lineno, r in enumerate(rows, 1):
        if len(r) != 1:
            raise AITError(f"{path}:{lineno}: expected one value per line")
    return np.array([r[0] for r in rows], dtype=np.float64)


def dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def write_bundle(instance, directory):
    """Write A.csv, y.csv, xstar.csv (if truth known) and meta.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_matrix(d / "A.csv", instance.matrix.entries)
    _write_vector(d / "y.csv", instance.observation)
    if instance.truth is not None:
        _write_vector(d / "xstar.csv", instance.truth.signal)
    meta = dict(instance.meta)
    meta.setdefault("seed", instance.seed)
    meta.setdefault("M", instance.matrix.M)
    meta.setdefault("N", instance.matrix.N)
    if instance.truth is not None:
        meta.setdefault("k_star", instance.truth.sparsity)
        meta.setdefault("dr", instance.truth.dynamic_range)
    meta["schema"] = SCHEMA_VERSION
    dump_json(meta, d / "meta.json")
    return d


def load_bundle(directory):
    """Read a bundle back into a ``ProblemInstance`` (columns re-normalized)."""
    d = Path(directory)
    if not (d / "A.csv").exists() or not (d / "y.csv").exists():
        raise AITError(f"{d} is not an instance bundle (need A.csv and y.csv)")
    A = normalize_columns(read_matrix_csv(d / "A.csv"))
    y = read_vector_csv(d / "y.csv")
    meta = json.loads((d / "meta.json").read_text()) if (d / "meta.json").exists() else {}
    truth = None
    if (d / "xstar.csv").exists():
        xs = read_vector_csv(d / "xstar.csv")
        if xs.shape != (A.N,):
            raise AITError(f"xstar.csv has {xs.size} entries, expected {A.N}")
        # x* in file coordinates -> normalized coordinates
        truth = truth_from_signal(xs * A.column_scales)
    return ProblemInstance(
        matrix=A, observation=y, truth=truth, seed=int(meta.get("seed", 0)), meta=meta
    )


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in trace:
            w.writerow(
                [
                    rec.t,
                    "" if rec.tau is None else _fmt(rec.tau),
                    ";".join(str(i) for i in rec.support),
                    "" if rec.linf_err is None else _fmt(rec.linf_err),
                ]
            )


def read_trace_csv(path):
    """Parse a trace CSV into thinned ``IterationRecord`` objects."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise IncompleteTrace(f"{path}: header must be {','.join(TRACE_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_COLUMNS):
                raise IncompleteTrace(f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} fields")
            t, tau, support, err = row
            try:
                records.append(
                    IterationRecord(
                        t=int(t),
                        tau=float(tau) if tau else None,
                        support=tuple(int(i) for i in support.split(";")) if support else (),
                        linf_err=float(err) if err else None,
                    )
                )
            except ValueError as exc:
                raise IncompleteTrace(f"{path}:{lineno}: {exc}") from None
    return records
