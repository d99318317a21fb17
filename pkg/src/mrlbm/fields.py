"""Population values attached to the complete leaves of a tree."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import CellId, CellTree


@dataclass(frozen=True)
class FieldSet:
    """``values[r, h]`` is population ``h`` on leaf row ``r``.

    Rows follow ``tree.leaf_index``: level by level, C order within a level.
    """

    tree: CellTree
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != self.tree.n_leaves:
            raise ValueError(f"values shape {v.shape} does not match {self.tree.n_leaves} leaves")
        object.__setattr__(self, "values", v)

    @property
    def q(self) -> int:
        return self.values.shape[1]

    def level_values(self, level: int) -> np.ndarray:
        return self.values[self.tree.leaf_rows(level)]

    def cell_of_row(self, row: int) -> CellId:
        off = self.tree.leaf_offsets
        i = int(np.searchsorted(off, row, side="right")) - 1
        level = self.tree.grid.min_level + i
        k = self.tree.leaf_index(level)[row - off[i]]
        return CellId(level, tuple(int(v) for v in k))

    def measures(self) -> np.ndarray:
        """Cell measure ``2^(-d l)`` per row."""
        g = self.tree.grid
        out = np.empty(self.tree.n_leaves)
        for j in g.levels:
            out[self.tree.leaf_rows(j)] = 2.0 ** (-g.dim * j)
        return out

    def totals(self) -> np.ndarray:
        """Integral of each population over the domain."""
        return self.measures() @ self.values

    def with_values(self, values: np.ndarray) -> "FieldSet":
        return FieldSet(self.tree, values)
