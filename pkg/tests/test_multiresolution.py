from fractions import Fraction
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrlbm.fields import FieldSet
from mrlbm.mesh import CellId, CellTree, Grid, children, is_graded, make_graded, parent
from mrlbm.multiresolution import (COEFFICIENTS, MissingStencilError, PredictionConfig, TreeData,
                                   adapt, build_prediction_table, compress_array, compute_details,
                                   consistency_check, derive_prediction_weights, encode, enlarge,
                                   predict, prediction_stencil, project, reconstruct, rim_offsets,
                                   threshold)

from conftest import random_tree, trees


def cell_means_1d(F, n):
    """Exact means of a function with antiderivative ``F`` on ``n`` cells of [0, 1]."""
    x = np.arange(n + 1) / n
    return (F(x[1:]) - F(x[:-1])) * n


def field_on(tree, fn, q=1):
    """Leaf values from a function of the cell centre (midpoint rule)."""
    parts = []
    for j in tree.grid.levels:
        c = (tree.leaf_index(j) + 0.5) * 2.0 ** -j
        parts.append(fn(*c.T).reshape(-1, 1) * np.ones((1, q)))
    return FieldSet(tree, np.concatenate(parts))


# --- coefficients

@pytest.mark.parametrize("gamma", [1, 2, 3])
def test_derived_weights_match_table(gamma):
    assert derive_prediction_weights(gamma) == COEFFICIENTS[gamma]


def test_table_values():
    assert COEFFICIENTS[1] == (Fraction(-1, 8),)
    assert COEFFICIENTS[2] == (Fraction(-22, 128), Fraction(3, 128))
    assert COEFFICIENTS[3] == (Fraction(-201, 1024), Fraction(11, 256), Fraction(-5, 1024))


# --- projection and prediction

def test_project_examples():
    assert project([2.0] * 4) == 2.0
    assert project([1, 3]) == 2
    assert project([1, 2, 3, 4]) == 2.5
    with pytest.raises(ValueError):
        project([1, 2, 3])


def test_predict_linear_1d():
    k = 5.0
    assert predict([k - 1, k, k + 1], [0]) == k - 0.25
    assert predict([k - 1, k, k + 1], [1]) == k + 0.25


@given(st.integers(1, 3), st.integers(1, 3), st.floats(-1e3, 1e3))
def test_predict_constant(d, gamma, c):
    cfg = PredictionConfig(gamma)
    s = np.full((2 * gamma + 1,) * d, c)
    for delta in np.ndindex(*(2,) * d):
        assert predict(s, delta, cfg) == pytest.approx(c, rel=1e-14, abs=1e-12)


def test_fig4_lower_left_weights():
    # one-hot probes, flipped corner sign; index [i, j] is offset (i-1, j-1)
    cfg = PredictionConfig(1, pair_sign=-1)
    w = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            e = np.zeros((3, 3))
            e[i, j] = 1
            w[i, j] = predict(e, (0, 0), cfg)
    assert w[1, 1] == 1
    assert w[0, 1] == w[1, 0] == 1 / 8       # W and S
    assert w[2, 1] == w[1, 2] == -1 / 8      # E and N
    assert w[0, 0] == w[2, 2] == -1 / 64     # SW and NE
    assert w[2, 0] == w[0, 2] == 1 / 64      # SE and NW


def test_tensor_corner_weights():
    _, W = prediction_stencil(PredictionConfig(1), 2, exact=True)
    # offsets in C order: (-1,-1) is first
    assert W[0][0] == Fraction(1, 64)


def test_predict_missing_stencil():
    with pytest.raises(MissingStencilError):
        predict(np.ones((3, 2)), (0, 0))
    s = np.ones(3)
    s[0] = np.nan
    with pytest.raises(MissingStencilError):
        predict(s, (0,))


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("gamma", [1, 2, 3])
@pytest.mark.parametrize("pair_sign", [1, -1])
def test_consistency_random(d, gamma, pair_sign):
    rng = np.random.default_rng(d * 10 + gamma)
    cfg = PredictionConfig(gamma, pair_sign)
    for _ in range(40):
        s = rng.normal(size=(2 * gamma + 1,) * d) * 10 ** rng.uniform(-3, 3)
        assert consistency_check(s[(gamma,) * d], s, cfg)


@given(st.integers(1, 3), st.integers(1, 3),
       st.lists(st.floats(-10, 10), min_size=343, max_size=343))
def test_consistency_property(d, gamma, vals):
    n = (2 * gamma + 1) ** d
    s = np.array(vals[:n]).reshape((2 * gamma + 1,) * d)
    assert consistency_check(s[(gamma,) * d], s, PredictionConfig(gamma), rtol=1e-13)


@pytest.mark.parametrize("gamma", [1, 2, 3])
def test_polynomial_exactness_1d(gamma):
    n = 16
    p = np.polynomial.Polynomial(np.arange(1, 2 * gamma + 2) / 3.0)
    P = p.integ()
    coarse = cell_means_1d(P, n)
    fine = cell_means_1d(P, 2 * n)
    for k in range(gamma, n - gamma):
        s = coarse[k - gamma:k + gamma + 1]
        for delta in (0, 1):
            assert predict(s, [delta], PredictionConfig(gamma)) == pytest.approx(fine[2 * k + delta], abs=1e-12)


@pytest.mark.parametrize("gamma", [1, 2])
def test_polynomial_exactness_2d_tensor(gamma):
    # per-axis degree <= 2 gamma, e.g. x^2g y^2g
    cfg = PredictionConfig(gamma)
    n = 8
    a = np.polynomial.Polynomial([0.3, -1, 0.5] + [0.2] * (2 * gamma - 2))
    b = np.polynomial.Polynomial([1, 0.7, -0.4] + [0.1] * (2 * gamma - 2))
    ca, cb = cell_means_1d(a.integ(), n), cell_means_1d(b.integ(), n)
    fa, fb = cell_means_1d(a.integ(), 2 * n), cell_means_1d(b.integ(), 2 * n)
    coarse = np.outer(ca, cb)
    k = (3, 4)
    s = coarse[k[0] - gamma:k[0] + gamma + 1, k[1] - gamma:k[1] + gamma + 1]
    for delta in np.ndindex(2, 2):
        want = fa[2 * k[0] + delta[0]] * fb[2 * k[1] + delta[1]]
        assert predict(s, delta, cfg) == pytest.approx(want, abs=1e-12)


# --- details

def test_details_vanish_on_constants():
    t = make_graded(random_tree(Grid(2, 1, 4), 5), 1)
    det = compute_details(field_on(t, lambda x, y: 0 * x + 3.0))
    assert max(float(m.max()) for m in det.metric.values()) < 1e-14


def test_details_vanish_on_quadratic_means():
    g = Grid(1, 2, 6)
    t = CellTree.full(g)
    f = FieldSet(t, cell_means_1d(lambda x: x ** 3 / 3, 64)[:, None])
    det = compute_details(f, keep_values=True)
    # interior cells only: the zero-order extension breaks exactness at the walls
    for j in range(3, 7):
        d = np.abs(det.values[j][:, 0])
        idx = t.tree_index(j)[:, 0] >> 1
        inner = (idx >= 1) & (idx < (1 << (j - 1)) - 1)
        assert d[inner].max() < 1e-12


@given(trees(max_depth=3))
def test_sibling_detail_sum(t):
    t = make_graded(t, 1)
    rng = np.random.default_rng(t.n_leaves)
    f = FieldSet(t, rng.normal(size=(t.n_leaves, 2)))
    det = compute_details(f, keep_values=True)
    d = t.grid.dim
    for j, vals in det.values.items():
        if not len(vals):
            continue
        idx = t.tree_index(j)
        parents = np.unique(idx >> 1, axis=0, return_inverse=True)[1].ravel()
        sums = np.zeros((parents.max() + 1, 2))
        np.add.at(sums, parents, vals)
        assert np.abs(sums).max() <= 1e-12 * max(1.0, np.abs(f.values).max()) * 2 ** d


def test_step_details_level_independent():
    g = Grid(1, 2, 8)
    x = (np.arange(256) + 0.5) / 256
    f = FieldSet(CellTree.full(g), (x < 0.3 + 1e-9).astype(float)[:, None])
    det = compute_details(f)
    peaks = [det.metric[p].max() for p in range(3, 8)]
    # O(1) at every level; the value depends on where the jump cuts the cells
    assert min(peaks) > 0.05 and max(peaks) < 0.5
    smooth = compute_details(FieldSet(f.tree, np.exp(-50 * (x - 0.5) ** 2)[:, None]))
    decay = [smooth.metric[p].max() for p in range(3, 8)]
    assert all(b < a / 4 for a, b in zip(decay, decay[1:]))


# --- threshold / enlarge / adapt

def test_threshold_extremes():
    g = Grid(2, 1, 5)
    t = CellTree.full(g)
    f = field_on(t, lambda x, y: np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))
    det = compute_details(f)
    assert threshold(t, det, 1e9) == CellTree.coarsest(g)
    assert threshold(t, det, 0.0) == t


def test_threshold_step_band():
    g = Grid(1, 2, 8)
    x = (np.arange(256) + 0.5) / 256
    f = FieldSet(CellTree.full(g), (x < 0.3 + 1e-9).astype(float)[:, None])
    t = threshold(f.tree, compute_details(f), 1e-3)
    fine = np.flatnonzero(t.leaf_mask(8))
    assert len(fine) and np.all(np.abs((fine + 0.5) / 256 - 0.3) < 0.05)


def test_threshold_inclusive():
    g = Grid(1, 1, 3)
    t = CellTree.full(g)
    rng = np.random.default_rng(0)
    det = compute_details(FieldSet(t, rng.normal(size=(8, 1))))
    eps = det.metric[2][1] / 2.0 ** (3 - 3)
    kept = threshold(t, det, eps)
    assert kept.refined(2)[1]


def test_enlarge_rule_a():
    g = Grid(1, 2, 5)
    refined = [np.zeros(4, bool), np.zeros(8, bool), np.zeros(16, bool)]
    refined[0][1] = refined[1][3] = refined[2][7] = True
    t = CellTree(g, refined)
    det = compute_details(FieldSet(t, np.zeros((t.n_leaves, 1))))
    out = enlarge(t, det, 1e-3, 0, np.array([[1], [-1]]))
    # shifted cells 13 and 16 bring their sibling groups
    assert np.flatnonzero(out.in_tree(5)).tolist() == [12, 13, 14, 15, 16, 17]


def test_enlarge_rule_b_boundary():
    g = Grid(1, 1, 4)
    t = CellTree.full(g)
    refined = [np.ones(2, bool), np.ones(4, bool), np.zeros(8, bool)]
    t = CellTree(g, refined)
    det = compute_details(FieldSet(t, np.zeros((t.n_leaves, 1))))
    eps, mu = 1e-3, 1
    j = 3
    det.metric[j - 1][:] = 0
    det.metric[j - 1][2] = 2.0 ** (mu + 1) * eps * 2.0 ** (j - 4)  # exactly the trigger
    out = enlarge(t, det, eps, mu, np.zeros((1, 1)))
    assert out.refined(3)[[4, 5]].all() and out.refined(3).sum() == 2


def test_adapt_eps_zero_identity():
    g = Grid(2, 1, 4)
    rng = np.random.default_rng(1)
    f = FieldSet(CellTree.full(g), rng.normal(size=(256, 3)))
    assert adapt(f, 0.0, 1, np.array([[1, 0], [0, 1]])) is f


def test_adapt_constant_field():
    g = Grid(2, 2, 5)
    f = FieldSet(CellTree.full(g), np.full((1024, 2), 1.5))
    out = adapt(f, 1e-3, 1, np.array([[1, 0], [-1, 0]]))
    assert out.tree == make_graded(CellTree.coarsest(g), 1)
    assert np.all(out.values == 1.5)


@given(trees(dims=(1, 2), max_depth=4), st.floats(1e-4, 1e-1))
def test_adapt_conserves_mass(t, eps):
    t = make_graded(t, 1)
    f = field_on(t, lambda *x: np.prod([np.sin(3 * xi + 1) for xi in x], axis=0), q=2)
    vel = np.eye(t.grid.dim, dtype=int)
    out = adapt(f, eps, 1, vel)
    assert is_graded(out.tree, 1)
    m0, m1 = f.totals(), out.totals()
    assert np.allclose(m0, m1, rtol=1e-12, atol=1e-14)


# --- reconstruction vs a memoised structural oracle

def oracle_reconstruct(field, target, cfg=PredictionConfig()):
    tree = field.tree
    g = tree.grid
    offs, W = prediction_stencil(cfg, g.dim)
    leaves = {c: field.values[i] for i, c in enumerate(
        CellId(j, tuple(int(v) for v in k)) for j in g.levels for k in tree.leaf_index(j))}
    complete = tree.complete_tree()

    @lru_cache(maxsize=None)
    def value(c):
        shp = g.shape(c.level)
        c = CellId(c.level, tuple(min(max(k, 0), n - 1) for k, n in zip(c.index, shp)))
        if c in leaves:
            return leaves[c]
        if c in complete:
            return np.mean([value(ch) for ch in children(c)], axis=0)
        p = parent(c)
        delta = tuple(k & 1 for k in c.index)
        row = int(sum(b << (g.dim - 1 - i) for i, b in enumerate(delta)))
        acc = 0
        for o, w in zip(offs, W[row]):
            acc = acc + w * value(CellId(p.level, tuple(a + b for a, b in zip(p.index, o))))
        return acc

    return value(target)


@given(trees(dims=(1, 2), max_depth=3), st.integers(1, 2))
def test_reconstruct_matches_oracle(t, gamma):
    cfg = PredictionConfig(gamma)
    t = make_graded(t, gamma)
    rng = np.random.default_rng(t.n_leaves)
    f = FieldSet(t, rng.normal(size=(t.n_leaves, 2)))
    fin = TreeData(f, cfg).finest()
    J = t.grid.max_level
    for k in list(np.ndindex(*t.grid.shape(J)))[::7]:
        want = oracle_reconstruct(f, CellId(J, k), cfg)
        assert np.allclose(fin[k], want, rtol=1e-13, atol=1e-13)
    k0 = (0,) * t.grid.dim
    assert np.allclose(reconstruct(t, f, CellId(J, k0), cfg), fin[k0])


def test_reconstruct_under_finest_leaf_verbatim():
    g = Grid(1, 1, 3)
    rng = np.random.default_rng(3)
    f = FieldSet(CellTree.full(g), rng.normal(size=(8, 1)))
    assert np.array_equal(TreeData(f).finest()[:, 0], f.values[:, 0])


# --- flattened tables

def test_table_examples():
    t0 = build_prediction_table(0, (1,), "in")
    assert t0.shifts.tolist() == [[-1]] and t0.weights.tolist() == [1.0]
    t1 = build_prediction_table(1, (1,), "in")
    assert t1.shifts[:, 0].tolist() == [-2, -1, 0]
    assert t1.weights.tolist() == [-1 / 8, 1.0, 1 / 8]


def uniform_level_data(grid, j, rng, smooth=False):
    tree = CellTree(grid, [np.full(grid.shape(l), l < j) for l in range(grid.min_level, grid.max_level)])
    if smooth:
        f = field_on(tree, lambda *x: 1 + 0.3 * np.prod([xi ** 2 - xi for xi in x], axis=0))
    else:
        f = FieldSet(tree, rng.normal(size=(tree.n_leaves, 1)))
    return TreeData(f)


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("side", ["in", "out"])
def test_table_equals_recursion(d, side):
    rng = np.random.default_rng(d)
    J = 8 if d == 1 else 7
    grid = Grid(d, 0, J)
    etas = [e for e in np.ndindex(*(5,) * d)]
    for gap in range(0, 7 if d == 1 else 5):
        j = J - gap
        data = uniform_level_data(grid, j, rng)
        origin = np.array(grid.shape(j)) // 2
        for e in etas[::3]:
            eta = tuple(int(v) - 2 for v in e)
            tab = build_prediction_table(gap, eta, side)
            E, A = rim_offsets(gap, eta)
            rim = E if side == "in" else A
            direct = data.values_at(J, (origin << gap) + rim).sum()
            flat = tab.weights @ data.values_at(j, origin + tab.shifts)[:, 0]
            assert flat == pytest.approx(direct, rel=1e-12, abs=1e-12)
            assert tab.weights.sum() == pytest.approx(len(rim), rel=1e-13)


# --- static compression

def test_compress_constant_field():
    rep = compress_array(np.full((64, 64), 2.0), 1e-3, 1, min_level=2)
    assert rep.meshor == 16 / 4096 and rep.linf == 0


def test_compress_step_concentrates_at_jump():
    x = (np.arange(256) + 0.5) / 256
    rep = compress_array((x < 0.6).astype(float), 1e-4, 1, min_level=2)
    fine = np.flatnonzero(rep.tree.leaf_mask(8))
    assert np.all(np.abs((fine + 0.5) / 256 - 0.6) < 0.05)


def test_compress_rejects_bad_shape():
    with pytest.raises(ValueError):
        compress_array(np.zeros(48), 1e-3)


def test_encode_keeps_exact_leaf_means():
    g = Grid(1, 2, 6)
    x = (np.arange(64) + 0.5) / 64
    f = FieldSet(CellTree.full(g), np.sin(6 * x)[:, None])
    enc = encode(f, 1e-3)
    full = TreeData(f)
    for j in g.levels:
        idx = enc.tree.leaf_index(j)
        assert np.allclose(enc.level_values(j), full.values[j][f.tree.tree_slot(j)[tuple(idx.T)]])
