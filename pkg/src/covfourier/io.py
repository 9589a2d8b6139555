"""Flat-file formats: observation, covariance, spot and jump CSVs.

Floats are written with ``repr`` (shortest string that round-trips), so a
write followed by a read reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .core import SampledPath, SymMatrixPath, TimeGrid, upper_pairs
from .errors import EmptyFileError, NonFiniteError, NotEquidistantError, ValidationError

SPACING_RTOL = 1e-9


def fmt(x) -> str:
    return repr(float(x))


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
    return path


def _read_table(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise EmptyFileError(f"{path} has no data rows")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValidationError(f"{path}: ragged rows")
    bad = ~np.all(np.isfinite(data), axis=1)
    if np.any(bad):
        row = int(np.argmax(bad)) + 1
        raise NonFiniteError(f"{path}: non-finite value in data row {row}")
    return header, data


def upper_columns(d: int, prefix: str = "x") -> List[str]:
    return [f"{prefix}{i + 1}{j + 1}" for i, j in upper_pairs(d)]


def parse_observations_csv(path) -> SampledPath:
    """Read ``time,y1,...,yd`` into a :class:`SampledPath`.

    The first time must be 0 and the spacing constant within a relative
    ``1e-9``; ``n`` is the reciprocal spacing and ``T`` the last time.
    Rows are counted from 1 after the header.
    """
    header, data = _read_table(path)
    d = len(header) - 1
    if header[0] != "time" or d < 1 or header[1:] != [f"y{i + 1}" for i in range(d)]:
        raise ValidationError(f"expected header time,y1,...,yd; got {','.join(header)}")
    t = data[:, 0]
    if t.size < 2:
        raise EmptyFileError("need at least two observations")
    if abs(t[0]) > SPACING_RTOL * abs(t[1] - t[0]):
        raise NotEquidistantError("observation times must start at 0", row=1)
    h = t[1] - t[0]
    if not h > 0:
        raise NotEquidistantError("times must be increasing", row=2)
    off = np.abs(np.diff(t) - h) > SPACING_RTOL * h
    if np.any(off):
        row = int(np.argmax(off)) + 2
        raise NotEquidistantError(f"spacing changes at data row {row}", row=row)
    inv = 1.0 / h
    n = int(round(inv))
    if abs(inv - n) > 1e-6 * inv:
        raise ValidationError(f"spacing {h!r} is not 1/n for an integer n")
    grid = TimeGrid(n, (t.size - 1) / n)
    return SampledPath(grid, data[:, 1:])


def write_observations_csv(path, y: SampledPath) -> Path:
    header = ["time"] + [f"y{i + 1}" for i in range(y.d)]
    times = y.grid.times()
    return _write_rows(path, header, ([fmt(t)] + [fmt(v) for v in row] for t, row in zip(times, y.values)))


def write_matrix_path_csv(path, mpath: SymMatrixPath, extra: dict = None) -> Path:
    """``time`` then the upper triangle ``x11,x12,...`` plus optional integer columns."""
    d = mpath.d
    pairs = list(upper_pairs(d))
    extra = extra or {}
    header = ["time"] + upper_columns(d) + list(extra)
    cols = [np.asarray(v) for v in extra.values()]

    def rows():
        for k, (t, m) in enumerate(zip(mpath.times, mpath.values)):
            yield [fmt(t)] + [fmt(m[i, j]) for i, j in pairs] + [str(int(c[k])) for c in cols]

    return _write_rows(path, header, rows())


def write_spot_csv(path, x_path: SymMatrixPath, clamped) -> Path:
    return write_matrix_path_csv(path, x_path, {"clamped": clamped})


def read_matrix_path_csv(path) -> SymMatrixPath:
    header, data = _read_table(path)
    k = len(header) - 1
    d = int(round((math.sqrt(8 * k + 1) - 1) / 2))
    if header[0] != "time" or header[1:] != upper_columns(d):
        raise ValidationError(f"expected header time,{','.join(upper_columns(d))}")
    vals = np.zeros((data.shape[0], d, d))
    for c, (i, j) in enumerate(upper_pairs(d)):
        vals[:, i, j] = vals[:, j, i] = data[:, 1 + c]
    return SymMatrixPath(data[:, 0], vals)


def write_jumps_csv(path, grid: TimeGrid, y_jumps, x_jumps) -> Path:
    """One row per jump: time, process (``y`` or ``x11``), component (1-based), mark."""
    rows = []
    for process, log in (("y", y_jumps), ("x11", x_jumps)):
        for t, comp, mark in log.as_records(grid):
            rows.append((t, process, comp + 1, mark))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return _write_rows(path, ["time", "process", "component", "mark"],
                       ([fmt(t), p, str(c), fmt(mk)] for t, p, c, mk in rows))


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Generic CSV writer; float cells are formatted with :func:`fmt`."""
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return fmt(v)
        return str(v)

    return _write_rows(path, header, ([cell(v) for v in row] for row in rows))
