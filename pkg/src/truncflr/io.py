"""CSV ingestion and output helpers.

Curves file: first row holds the grid points, every later row one curve.
Responses file: one value per line (an optional non-numeric header line is
skipped). Numbers are written with ``repr`` so a write/read cycle is exact.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ParseError
from .numerics import CurveSet, Grid


def _read_rows(path):
    p = Path(path)
    if not p.is_file():
        raise ParseError("file not found", path=str(path))
    with p.open(newline="") as fh:
        return [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in row)]


def _floats(row, path, line):
    out = []
    for cell in row:
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(f"not a number: {cell.strip()!r}", str(path), line) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite value {cell.strip()!r}", str(path), line)
        out.append(v)
    return out


def load_curves(path):
    rows = _read_rows(path)
    if len(rows) < 2:
        raise ParseError("need a grid row and at least one curve", str(path))
    line, head = rows[0]
    pts = _floats(head, path, line)
    try:
        grid = Grid.from_points(pts)
    except ValueError as exc:
        raise ParseError(f"bad grid header: {exc}", str(path), line) from None
    values = []
    for line, row in rows[1:]:
        if len(row) != grid.size:
            raise ParseError(f"expected {grid.size} values, found {len(row)}", str(path), line)
        values.append(_floats(row, path, line))
    return CurveSet(grid, np.array(values))


def load_responses(path, n=None):
    rows = _read_rows(path)
    if rows:
        try:
            float(rows[0][1][0])
        except ValueError:
            rows = rows[1:]
    out = []
    for line, row in rows:
        if len(row) != 1:
            raise ParseError(f"expected a single column, found {len(row)}", str(path), line)
        out.extend(_floats(row, path, line))
    if not out:
        raise ParseError("no responses", str(path))
    if n is not None and len(out) != n:
        raise ParseError(f"{len(out)} responses but {n} curves", str(path))
    return np.array(out)


def write_curves(path, curves):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([repr(float(v)) for v in curves.grid.points])
        for row in curves.values:
            w.writerow([repr(float(v)) for v in row])


def write_responses(path, y):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for v in np.asarray(y, dtype=float):
            w.writerow([repr(float(v))])


def write_columns(path, header, columns):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data):
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def read_json(path):
    p = Path(path)
    if not p.is_file():
        raise ParseError("file not found", path=str(path))
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, str(path), exc.lineno) from None
