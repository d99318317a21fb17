"""Nested dyadic grids, cell trees and grading.

A level-l grid of a box with integer ``base`` shape has ``base * 2**l`` square
cells of edge ``2**-l``. Cell ``(l, k)`` covers ``[k 2^-l, (k+1) 2^-l)``.

A tree is stored per level as a dense boolean mask of *refined* cells, i.e.
cells whose ``2**d`` children are present. Everything else (complete tree,
leaves, detail cells) is derived from it. Dense masks keep all set algebra
vectorised; the finest level is the largest array (``2**(d*Jbar)`` bytes).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage


class LevelError(ValueError):
    """Raised when a cell operation would leave the admissible level range."""


class CellId(NamedTuple):
    level: int
    index: tuple[int, ...]


@dataclass(frozen=True)
class CellGeometry:
    origin: tuple[float, ...]
    edge: float
    measure: float


@dataclass(frozen=True)
class Grid:
    """Dyadic grid family on ``prod(base)`` unit squares/cubes."""

    dim: int
    min_level: int
    max_level: int
    base: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not 0 <= self.min_level <= self.max_level:
            raise ValueError("need 0 <= min_level <= max_level")
        if not self.base:
            object.__setattr__(self, "base", (1,) * self.dim)
        if len(self.base) != self.dim or min(self.base) < 1:
            raise ValueError(f"bad base shape {self.base}")
        object.__setattr__(self, "base", tuple(int(b) for b in self.base))

    @property
    def levels(self) -> range:
        return range(self.min_level, self.max_level + 1)

    def shape(self, level: int) -> tuple[int, ...]:
        return tuple(b << level for b in self.base)

    def size(self, level: int) -> int:
        return int(np.prod(self.shape(level)))

    @property
    def dx(self) -> float:
        return 2.0 ** -self.max_level

    @property
    def extent(self) -> tuple[int, ...]:
        return self.base

    def contains(self, cell: CellId) -> bool:
        shp = self.shape(cell.level)
        return all(0 <= k < n for k, n in zip(cell.index, shp))


# ---------------------------------------------------------------- cell algebra

def _check_level(cell: CellId, grid: Grid | None):
    if grid is not None and not (grid.min_level <= cell.level <= grid.max_level):
        raise LevelError(f"level {cell.level} outside [{grid.min_level}, {grid.max_level}]")


def children(cell: CellId, grid: Grid | None = None) -> list[CellId]:
    """Children ``(l+1, 2k+delta)``, lexicographic in delta."""
    _check_level(cell, grid)
    if grid is not None and cell.level >= grid.max_level:
        raise LevelError(f"cell {cell} is at the finest level")
    d = len(cell.index)
    return [CellId(cell.level + 1, tuple(2 * k + b for k, b in zip(cell.index, delta)))
            for delta in itertools.product((0, 1), repeat=d)]


def parent(cell: CellId, grid: Grid | None = None) -> CellId:
    _check_level(cell, grid)
    if grid is not None and cell.level <= grid.min_level:
        raise LevelError(f"cell {cell} is at the coarsest level")
    if cell.level <= 0:
        raise LevelError("level 0 has no parent")
    return CellId(cell.level - 1, tuple(k // 2 for k in cell.index))


def geometry(cell: CellId, grid: Grid | None = None) -> CellGeometry:
    _check_level(cell, grid)
    edge = 2.0 ** -cell.level
    return CellGeometry(tuple(k * edge for k in cell.index), edge, edge ** len(cell.index))


def is_detail_cell(cell: CellId, min_level: int) -> bool:
    """Cells of the redundancy-free index set: one sibling per group is dropped."""
    return cell.level == min_level or not all(k & 1 for k in cell.index)


# ----------------------------------------------------------- dense mask tools

def upsample(mask: np.ndarray) -> np.ndarray:
    """Each entry repeated on its 2^d children."""
    out = mask
    for ax in range(mask.ndim):
        out = np.repeat(out, 2, axis=ax)
    return out


def coarsen_any(mask: np.ndarray) -> np.ndarray:
    """Parent flag: true when any child is set."""
    return _block_reduce(mask, np.any)


def coarsen_max(values: np.ndarray) -> np.ndarray:
    return _block_reduce(values, np.max)


def _block_reduce(a: np.ndarray, fn):
    shp = []
    for n in a.shape:
        shp += [n // 2, 2]
    return fn(a.reshape(shp), axis=tuple(range(1, 2 * a.ndim, 2)))


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Box dilation of given radius; outside the array counts as unset."""
    if radius == 0 or not mask.any():
        return mask.copy()
    return ndimage.maximum_filter(mask.view(np.uint8), size=2 * radius + 1,
                                  mode="constant", cval=0).astype(bool)


def ravel(idx: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    return np.ravel_multi_index(tuple(idx.T), shape)


def box_offsets(radius: int, dim: int) -> np.ndarray:
    """All offsets of ``[-r, r]^d`` in C order, shape ``((2r+1)^d, d)``."""
    r = np.arange(-radius, radius + 1)
    return np.stack(np.meshgrid(*([r] * dim), indexing="ij"), -1).reshape(-1, dim)


# ------------------------------------------------------------------ the tree

class TreeCheck(NamedTuple):
    ok: bool
    rule: int | None = None
    cell: CellId | None = None
    message: str = ""

    def __bool__(self):
        return self.ok


class CellTree:
    """Immutable snapshot of a tree given by its per-level refined masks.

    ``refined[i]`` is the mask of level ``min_level + i`` for levels below the
    finest one. The constructor checks that refined cells are in the tree.
    """

    def __init__(self, grid: Grid, refined: Sequence[np.ndarray]):
        self.grid = grid
        nlev = grid.max_level - grid.min_level
        if len(refined) != nlev:
            raise ValueError(f"expected {nlev} refined masks, got {len(refined)}")
        masks = []
        for i, r in enumerate(refined):
            r = np.array(r, dtype=bool)
            if r.shape != grid.shape(grid.min_level + i):
                raise ValueError(f"refined mask {i} has shape {r.shape}")
            r.flags.writeable = False
            masks.append(r)
        self._refined = tuple(masks)
        tree = [np.ones(grid.shape(grid.min_level), bool)]
        for r in self._refined:
            if np.any(r & ~tree[-1]):
                raise ValueError("refined cell outside the tree")
            tree.append(upsample(r))
        for t in tree:
            t.flags.writeable = False
        self._in_tree = tuple(tree)

    # -- constructors
    @classmethod
    def coarsest(cls, grid: Grid) -> "CellTree":
        return cls(grid, [np.zeros(grid.shape(j), bool) for j in range(grid.min_level, grid.max_level)])

    @classmethod
    def full(cls, grid: Grid) -> "CellTree":
        return cls(grid, [np.ones(grid.shape(j), bool) for j in range(grid.min_level, grid.max_level)])

    @classmethod
    def from_cells(cls, grid: Grid, cells: Iterable[CellId]) -> "CellTree":
        """Build from an index set Lambda (detail-cell convention)."""
        cells = set(cells)
        chk = is_tree(cells, grid)
        if not chk:
            raise ValueError(f"not a tree: {chk.message}")
        refined = [np.zeros(grid.shape(j), bool) for j in range(grid.min_level, grid.max_level)]
        for c in cells:
            if c.level > grid.min_level:
                refined[c.level - 1 - grid.min_level][tuple(k // 2 for k in c.index)] = True
        return cls(grid, refined)

    # -- per-level masks
    def refined(self, level: int) -> np.ndarray:
        if level == self.grid.max_level:
            return np.zeros(self.grid.shape(level), bool)
        return self._refined[level - self.grid.min_level]

    @property
    def refined_masks(self) -> tuple[np.ndarray, ...]:
        return self._refined

    def in_tree(self, level: int) -> np.ndarray:
        return self._in_tree[level - self.grid.min_level]

    @cached_property
    def _leaf_masks(self):
        return tuple(self.in_tree(j) & ~self.refined(j) for j in self.grid.levels)

    def leaf_mask(self, level: int) -> np.ndarray:
        return self._leaf_masks[level - self.grid.min_level]

    @cached_property
    def _leaf_index(self):
        return tuple(np.argwhere(m) for m in self._leaf_masks)

    def leaf_index(self, level: int) -> np.ndarray:
        """Leaf multi-indices at ``level`` in C order, shape ``(n, d)``."""
        return self._leaf_index[level - self.grid.min_level]

    @cached_property
    def leaf_offsets(self) -> np.ndarray:
        counts = [len(ix) for ix in self._leaf_index]
        return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def leaf_rows(self, level: int) -> slice:
        i = level - self.grid.min_level
        return slice(int(self.leaf_offsets[i]), int(self.leaf_offsets[i + 1]))

    @property
    def n_leaves(self) -> int:
        return int(self.leaf_offsets[-1])

    @cached_property
    def _tree_index(self):
        return tuple(np.argwhere(m) for m in self._in_tree)

    def tree_index(self, level: int) -> np.ndarray:
        return self._tree_index[level - self.grid.min_level]

    @cached_property
    def _tree_slot(self):
        out = []
        for m in self._in_tree:
            s = np.full(m.shape, -1, np.int32)
            s[m] = np.arange(int(m.sum()), dtype=np.int32)
            s.flags.writeable = False
            out.append(s)
        return tuple(out)

    def tree_slot(self, level: int) -> np.ndarray:
        """Dense map cell -> row among the level's tree cells (-1 if absent)."""
        return self._tree_slot[level - self.grid.min_level]

    @cached_property
    def _leaf_in_tree_rows(self):
        return tuple(self.tree_slot(j)[self.leaf_mask(j)] for j in self.grid.levels)

    def leaf_tree_rows(self, level: int) -> np.ndarray:
        """Rows (among the level's tree cells) of the level's leaves."""
        return self._leaf_in_tree_rows[level - self.grid.min_level]

    @property
    def n_tree_cells(self) -> int:
        return int(sum(int(m.sum()) for m in self._in_tree))

    @property
    def depth(self) -> int:
        """Finest level holding a leaf."""
        for j in reversed(self.grid.levels):
            if self.leaf_mask(j).any():
                return j
        return self.grid.min_level

    # -- set views
    def complete_tree(self) -> set[CellId]:
        return {CellId(j, tuple(int(v) for v in k))
                for j in self.grid.levels for k in self.tree_index(j)}

    def detail_cells(self) -> set[CellId]:
        jm = self.grid.min_level
        return {c for c in self.complete_tree() if is_detail_cell(c, jm)}

    def complete_leaves(self) -> set[CellId]:
        return {CellId(j, tuple(int(v) for v in k))
                for j in self.grid.levels for k in self.leaf_index(j)}

    def leaves(self) -> set[CellId]:
        """Leaves of Lambda proper (non-detail siblings excluded)."""
        jm = self.grid.min_level
        return {c for c in self.complete_leaves() if is_detail_cell(c, jm)}

    def intervals(self, level: int) -> list[tuple[tuple[int, ...], int, int]]:
        """Leaf runs ``(outer index, start, stop)`` along the last axis."""
        m = self.leaf_mask(level)
        runs = []
        flat = m.reshape(-1, m.shape[-1])
        outer_shape = m.shape[:-1]
        for r, row in enumerate(flat):
            if not row.any():
                continue
            edges = np.flatnonzero(np.diff(np.concatenate([[0], row.view(np.uint8), [0]])))
            outer = tuple(int(v) for v in np.unravel_index(r, outer_shape)) if outer_shape else ()
            runs += [(outer, int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]
        return runs

    # -- comparisons
    def __eq__(self, other):
        if not isinstance(other, CellTree):
            return NotImplemented
        return self.grid == other.grid and all(
            np.array_equal(a, b) for a, b in zip(self._refined, other._refined))

    def __hash__(self):
        return id(self)

    def issubset(self, other: "CellTree") -> bool:
        return all(not np.any(a & ~b) for a, b in zip(self._refined, other._refined))

    def union(self, other: "CellTree") -> "CellTree":
        return CellTree(self.grid, [a | b for a, b in zip(self._refined, other._refined)])

    def __repr__(self):
        return (f"CellTree(dim={self.grid.dim}, levels={self.grid.min_level}..{self.grid.max_level}, "
                f"leaves={self.n_leaves})")


# ------------------------------------------------------- checks and grading

def is_tree(cells: Iterable[CellId], grid: Grid) -> TreeCheck:
    """Check the three tree properties on a detail-convention index set.

    Rule 0 flags cells that are not admissible indices at all (outside the
    domain or level range, or a redundant non-detail sibling).
    """
    cells = set(cells)
    jm = grid.min_level
    for c in sorted(cells):
        if not (jm <= c.level <= grid.max_level) or len(c.index) != grid.dim or not grid.contains(c):
            return TreeCheck(False, 0, c, f"{c} is not an admissible cell")
        if not is_detail_cell(c, jm):
            return TreeCheck(False, 0, c, f"{c} is the redundant sibling of its group")
    for k in np.ndindex(*grid.shape(jm)):
        if CellId(jm, k) not in cells:
            return TreeCheck(False, 1, CellId(jm, k), "coarsest level incomplete")
    for c in sorted(cells):
        if c.level == jm:
            continue
        p = parent(c)
        for s in children(p):
            if is_detail_cell(s, jm) and s not in cells:
                return TreeCheck(False, 2, c, f"sibling {s} of {c} missing")
        if p.level > jm and not is_detail_cell(p, jm):
            # the redundant sibling is in R(Lambda) when its group is present
            present = any(s in cells for s in children(parent(p)) if s != p)
        else:
            present = p in cells
        if not present:
            return TreeCheck(False, 3, c, f"parent {p} of {c} not in the tree")
    return TreeCheck(True)


def insert_cells(refined: list[np.ndarray], grid: Grid, level: int, mask: np.ndarray) -> None:
    """Make the cells of ``mask`` (at ``level``) tree members, in place.

    Inserting a cell refines its parent, which must in turn be inserted.
    """
    jm = grid.min_level
    while level > jm:
        mask = mask & ~upsample(refined[level - 1 - jm])
        if not mask.any():
            return
        need = coarsen_any(mask)
        refined[level - 1 - jm] |= need
        mask, level = need, level - 1


def make_graded(tree: CellTree, gamma: int) -> CellTree:
    """Smallest graded superset: every refined cell's (2g+1)^d box is in the tree."""
    grid = tree.grid
    jm = grid.min_level
    refined = [r.copy() for r in tree.refined_masks]
    for p in range(grid.max_level - 1, jm, -1):
        box = dilate(refined[p - jm], gamma)
        insert_cells(refined, grid, p, box)
    return CellTree(grid, refined)


def is_graded(tree: CellTree, gamma: int) -> bool:
    grid = tree.grid
    for p in range(grid.min_level + 1, grid.max_level):
        if np.any(dilate(tree.refined(p), gamma) & ~tree.in_tree(p)):
            return False
    return True


def complete_leaves(tree: CellTree) -> set[CellId]:
    return tree.complete_leaves()
