"""Snapshot and metrics files.

``cells_<step>.csv`` columns, in order::

    level, k0..k{d-1}, x0..x{d-1}, edge, <conserved moments>

``k`` is the integer cell index at ``level``, ``x`` the lower-left corner,
``edge = 2^-level``. Rows follow the leaf order (level by level, C order).
Floats use 17 significant digits so a reload is exact. The optional finest
dump ``finest_<step>.npy`` holds the reconstructed conserved moments on the
uniform finest grid, shape ``(*shape, n_conserved)``.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .fields import FieldSet
from .lbm import SchemeSpec, to_moments
from .mesh import CellTree, Grid, coarsen_any
from .multiresolution import PredictionConfig, TreeData

FLOAT_FMT = ".17g"


def _f(x: float) -> str:
    return format(float(x), FLOAT_FMT)


def snapshot_header(dim: int, names) -> list[str]:
    return (["level"] + [f"k{i}" for i in range(dim)] + [f"x{i}" for i in range(dim)]
            + ["edge"] + list(names))


def write_snapshot(field: FieldSet, scheme: SchemeSpec, step: int, out_dir, names,
                   dump_finest: bool = False, cfg: PredictionConfig = PredictionConfig()) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tree, d = field.tree, field.tree.grid.dim
    cons = to_moments(field.values, scheme)[:, list(scheme.conserved)]
    path = out_dir / f"cells_{step:06d}.csv"
    lines = [",".join(snapshot_header(d, names))]
    for j in tree.grid.levels:
        idx = tree.leaf_index(j)
        if not len(idx):
            continue
        h = 2.0 ** -j
        vals = cons[tree.leaf_rows(j)]
        for k, v in zip(idx, vals):
            row = [str(j)] + [str(int(a)) for a in k] + [_f(a * h) for a in k] + [_f(h)]
            lines.append(",".join(row + [_f(x) for x in v]))
    path.write_text("\n".join(lines) + "\n")
    written = [path]
    if dump_finest:
        fin = to_moments(TreeData(field, cfg).finest(), scheme)[..., list(scheme.conserved)]
        p = out_dir / f"finest_{step:06d}.npy"
        np.save(p, fin)
        written.append(p)
    return written


def tree_from_leaves(grid: Grid, leaves: dict[int, np.ndarray]) -> CellTree:
    """Tree whose complete leaves are ``leaves[level]`` (index arrays)."""
    masks = {}
    for j in grid.levels:
        m = np.zeros(grid.shape(j), bool)
        ix = leaves.get(j)
        if ix is not None and len(ix):
            m[tuple(np.asarray(ix).T)] = True
        masks[j] = m
    refined = []
    below = masks[grid.max_level]
    for j in range(grid.max_level - 1, grid.min_level - 1, -1):
        r = coarsen_any(below)
        refined.append(r)
        below = masks[j] | r
    tree = CellTree(grid, refined[::-1])
    for j in grid.levels:
        if not np.array_equal(tree.leaf_mask(j), masks[j]):
            raise ValueError(f"leaf set at level {j} does not tile the domain")
    return tree


def read_snapshot(path, grid: Grid) -> tuple[CellTree, np.ndarray, list[str]]:
    """``(tree, conserved values in leaf order, moment names)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = grid.dim
    names = header[2 + 2 * d:]
    level = np.array([int(r[0]) for r in body], dtype=np.int64)
    idx = np.array([[int(x) for x in r[1:1 + d]] for r in body], dtype=np.int64).reshape(-1, d)
    vals = np.array([[float(x) for x in r[2 + 2 * d:]] for r in body]).reshape(len(body), len(names))
    tree = tree_from_leaves(grid, {j: idx[level == j] for j in grid.levels})
    # reorder rows into leaf order
    order = np.lexsort(tuple(idx[:, i] for i in range(d - 1, -1, -1)) + (level,))
    return tree, vals[order], names


class MetricsWriter:
    """Append-only CSV, flushed after every row."""

    def __init__(self, path, columns):
        self.path = Path(path)
        self.columns = list(columns)
        self._fh = open(self.path, "w", newline="")
        self._fh.write(",".join(self.columns) + "\n")
        self._fh.flush()

    def write(self, **row):
        vals = []
        for c in self.columns:
            v = row.get(c, "")
            vals.append(_f(v) if isinstance(v, float) else str(v))
        self._fh.write(",".join(vals) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
