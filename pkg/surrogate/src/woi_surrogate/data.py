"""CSV ingestion for the solver-emitted training files.

interior.csv columns: x_1..x_d, u_hat
boundary.csv columns: x_1..x_d, n_1..n_d, b1
"""

import csv

import numpy as np


class ColumnMismatchError(ValueError):
    pass


def _read(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader if r]
    return header, np.asarray(rows) if rows else np.empty((0, len(header)))


def load_interior(path):
    header, table = _read(path)
    if not header or header[-1] != "u_hat" or not header[0].startswith("x_"):
        raise ColumnMismatchError(
            f"{path}: expected columns x_1..x_d,u_hat, found {header}"
        )
    dim = len(header) - 1
    return table[:, :dim], table[:, dim]


def load_boundary(path):
    header, table = _read(path)
    if not header or header[-1] != "b1" or (len(header) - 1) % 2 != 0:
        raise ColumnMismatchError(
            f"{path}: expected columns x_1..x_d,n_1..n_d,b1, found {header}"
        )
    dim = (len(header) - 1) // 2
    if header[dim] != "n_1":
        raise ColumnMismatchError(f"{path}: normal columns missing, found {header}")
    return table[:, :dim], table[:, dim : 2 * dim], table[:, 2 * dim]


def load_points(path):
    """Evaluation points: x_1..x_d with an optional trailing value column."""
    header, table = _read(path)
    dim = sum(1 for h in header if h.startswith("x_"))
    if dim == 0:
        raise ColumnMismatchError(f"{path}: no coordinate columns, found {header}")
    values = table[:, dim] if table.shape[1] > dim and table.size else None
    return table[:, :dim], values
