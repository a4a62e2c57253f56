"""CSV output with a one-line metadata comment, and the matching readers."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else "%.17g" % v
    return str(v)


def meta_line(meta: dict) -> str:
    return "# ahx " + " ".join(f"{k}={fmt(v)}" for k, v in meta.items())


def write_csv(path, meta: dict, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(meta_line(meta) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def _split(path):
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    meta = {}
    while lines and lines[0].startswith("#"):
        for tok in lines.pop(0).lstrip("#").split()[1:]:
            if "=" in tok:
                k, v = tok.split("=", 1)
                meta[k] = v
    if not lines:
        raise ValueError(f"{path} has no header row")
    return meta, next(csv.reader([lines[0]])), lines


def read_table(path):
    """(meta dict, list of row dicts with string values) for tables with text columns."""
    meta, cols, lines = _split(Path(path))
    return meta, [dict(zip(cols, row)) for row in csv.reader(lines[1:])]


def read_csv(path):
    """(meta dict, column names, float array of shape (rows, cols))."""
    path = Path(path)
    meta, cols, lines = _split(path)
    data = [[float(v) for v in row] for row in csv.reader(lines[1:])]
    if not data:
        raise ValueError(f"{path} has no data rows")
    arr = np.array(data, dtype=float)
    if arr.shape[1] != len(cols):
        raise ValueError(f"{path}: {arr.shape[1]} values per row but {len(cols)} columns")
    return meta, cols, arr


def save_transport(path, t, meta: dict | None = None) -> Path:
    return write_csv(path, meta or {"kind": "transport"}, ["grid", "g"], zip(t.grid, t.g_values))


def load_transport_table(path):
    _, cols, arr = read_csv(path)
    return arr[:, 0], arr[:, 1]


def save_approximation(path, a, meta: dict | None = None) -> Path:
    m = {"kind": a.basis.kind, "form": a.form, "N": a.basis.N, "transform": type(a.basis.transform).__name__}
    m.update(meta or {})
    return write_csv(path, m, ["n", "coeff"], enumerate(np.asarray(a.coeffs)))
