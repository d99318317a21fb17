import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrlbm.mesh import (CellId, CellTree, Grid, LevelError, children, complete_leaves, geometry,
                        is_graded, is_tree, make_graded, parent)

from conftest import random_tree, trees


# --- cell algebra

def test_children_examples():
    assert children(CellId(2, (3,))) == [CellId(3, (6,)), CellId(3, (7,))]
    assert children(CellId(0, (0, 0))) == [CellId(1, (0, 0)), CellId(1, (0, 1)),
                                           CellId(1, (1, 0)), CellId(1, (1, 1))]


def test_children_3d_tile_parent():
    c = CellId(2, (1, 3, 2))
    kids = children(c)
    assert len(kids) == 8
    g = geometry(c)
    lo = np.min([geometry(k).origin for k in kids], axis=0)
    assert tuple(lo) == g.origin
    assert sum(geometry(k).measure for k in kids) == g.measure
    assert all(geometry(k).edge == g.edge / 2 for k in kids)


def test_parent_examples():
    assert parent(CellId(3, (7,))) == CellId(2, (3,))
    assert parent(CellId(1, (1, 0))) == CellId(0, (0, 0))
    assert parent(CellId(5, (-1, 4))) == CellId(4, (-1, 2))


def test_level_errors():
    g = Grid(1, 2, 4)
    with pytest.raises(LevelError):
        children(CellId(4, (0,)), g)
    with pytest.raises(LevelError):
        parent(CellId(2, (0,)), g)


def test_geometry_examples():
    assert geometry(CellId(4, (5,))).origin == (5 / 16,)
    assert geometry(CellId(4, (5,))).edge == 1 / 16
    assert geometry(CellId(2, (1,))).origin == (1 / 4,)
    assert geometry(CellId(2, (1,))).edge == 1 / 4


@given(st.integers(1, 6), st.lists(st.integers(-8, 70), min_size=1, max_size=3))
def test_parent_children_round_trip(level, k):
    c = CellId(level, tuple(k))
    assert all(parent(ch) == c for ch in children(c))
    assert c in children(parent(c))


# --- tree checks

def test_is_tree_examples():
    g = Grid(2, 1, 3)
    coarse = {CellId(1, k) for k in itertools.product(range(2), repeat=2)}
    assert is_tree(coarse, g)
    bad = is_tree(coarse | {CellId(2, (0, 0))}, g)
    assert not bad and bad.rule in (2, 3)
    # the redundant sibling never belongs to the index set
    assert is_tree(coarse | {CellId(2, (1, 1))}, g).rule == 0


def test_from_cells_round_trip():
    t = random_tree(Grid(2, 1, 4), 7)
    assert CellTree.from_cells(t.grid, t.detail_cells()) == t
    assert is_tree(t.detail_cells(), t.grid)


@given(trees())
def test_complete_leaves_partition_unit_domain(t):
    total = sum(Fraction(1, 2 ** (c.level * t.grid.dim)) for c in complete_leaves(t))
    assert total == 1
    assert len(complete_leaves(t)) == t.n_leaves


def test_complete_leaves_extremes():
    g = Grid(2, 1, 3)
    assert len(CellTree.full(g).complete_leaves()) == 64
    assert len(CellTree.coarsest(g).complete_leaves()) == 4


def test_leaves_drop_redundant_siblings():
    t = random_tree(Grid(2, 1, 3), 3)
    redundant = t.complete_leaves() - t.leaves()
    assert all(c.level > 1 and all(k & 1 for k in c.index) for c in redundant)


# --- grading, checked against a set-based brute force

def graded_oracle(t: CellTree, gamma: int) -> set:
    """Least fixed point of 'add missing stencil cells with their sibling groups'."""
    g = t.grid
    R = t.complete_tree()
    changed = True
    while changed:
        changed = False
        for c in sorted(R):
            if c.level == g.min_level:
                continue
            p = parent(c)
            for off in itertools.product(range(-gamma, gamma + 1), repeat=g.dim):
                s = CellId(p.level, tuple(a + b for a, b in zip(p.index, off)))
                if not g.contains(s) or s in R:
                    continue
                x = s
                while x not in R:
                    R |= set(children(parent(x)))
                    x = parent(x)
                changed = True
    return R


@given(trees(max_depth=3), st.integers(1, 2))
def test_make_graded_matches_oracle(t, gamma):
    gt = make_graded(t, gamma)
    assert gt.complete_tree() == graded_oracle(t, gamma)
    assert is_graded(gt, gamma)
    assert is_tree(gt.detail_cells(), gt.grid)


@given(trees(), st.integers(1, 3))
def test_make_graded_idempotent(t, gamma):
    gt = make_graded(t, gamma)
    assert make_graded(gt, gamma) == gt
    assert t.issubset(gt)


@given(trees(dims=(1, 2), max_depth=3), st.integers(1, 2))
def test_grading_is_minimal(t, gamma):
    gt = make_graded(t, gamma)
    added = gt.complete_tree() - t.complete_tree()
    jm = gt.grid.min_level
    # dropping any added sibling group breaks grading (or the original tree)
    for c in list(added)[:10]:
        p = parent(c)
        refined = [r.copy() for r in gt.refined_masks]
        refined[p.level - jm][p.index] = False
        # also drop everything below the removed group
        for j in range(p.level + 1, gt.grid.max_level):
            refined[j - jm] &= np.kron(refined[j - 1 - jm], np.ones((2,) * gt.grid.dim, bool)).astype(bool)
        smaller = CellTree(gt.grid, refined)
        assert not (is_graded(smaller, gamma) and t.issubset(smaller))


def test_fig3_grading_1d():
    # a level-5 leaf group one cell away from a level-3 region gets level-4 neighbours
    g = Grid(1, 3, 5)
    refined = [np.zeros(8, bool), np.zeros(16, bool)]
    refined[0][4] = True
    refined[1][8] = True
    t = CellTree(g, refined)
    assert not is_graded(t, 1)
    gt = make_graded(t, 1)
    # level-4 cells now sit between the level-5 group and the level-3 leaves
    assert gt.refined(3)[3] and not gt.refined(3)[2]
    assert gt.leaf_mask(4)[[6, 7, 9]].all()
    assert gt.leaf_mask(3)[[0, 1, 2, 5, 6, 7]].all()


def test_intervals_cover_leaves():
    t = random_tree(Grid(2, 1, 4), 11)
    for j in t.grid.levels:
        n = sum(b - a for _, a, b in t.intervals(j))
        assert n == int(t.leaf_mask(j).sum())


def test_rectangular_grid():
    g = Grid(2, 1, 3, base=(2, 1))
    t = CellTree.full(g)
    assert t.n_leaves == 16 * 8
    assert sum(Fraction(1, 4 ** c.level) for c in t.complete_leaves()) == 2
