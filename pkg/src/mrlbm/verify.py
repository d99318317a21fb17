"""Quick invariant suite behind ``mrlbm verify`` (seconds, not minutes)."""

from __future__ import annotations

import numpy as np

from .lbm import reference_collide, reference_step, uniform_boundaries
from .mesh import CellTree, Grid, is_graded, make_graded
from .multiresolution import (COEFFICIENTS, PredictionConfig, TreeData, adapt, build_prediction_table,
                              derive_prediction_weights, prediction_stencil,
                              rim_offsets)
from .fields import FieldSet
from .schemes import advection_d1q2, advection_d2q4, equilibrium_field
from .solver import AdaptiveSolver


def _coefficients():
    return all(derive_prediction_weights(g) == COEFFICIENTS[g] for g in (1, 2, 3))


def _sibling_sum():
    rng = np.random.default_rng(0)
    for d in (1, 2, 3):
        for g in (1, 2, 3):
            _, W = prediction_stencil(PredictionConfig(g), d)
            vals = rng.normal(size=W.shape[1])
            pred = W @ vals
            centre = vals[W.shape[1] // 2]
            if abs(pred.mean() - centre) > 1e-13 * (1 + abs(centre)):
                return False
    return True


def _table_vs_recursive():
    rng = np.random.default_rng(1)
    grid = Grid(2, 1, 7)
    for gap in (1, 2, 3):
        j = grid.max_level - gap
        # uniform leaves at level j: finest values are pure predictions
        tree = CellTree(grid, [np.full(grid.shape(l), l < j) for l in range(1, 7)])
        u = rng.normal(size=(tree.n_leaves, 1))
        data = TreeData(FieldSet(tree, u), PredictionConfig())
        for eta in ((1, 0), (1, 1), (0, -2)):
            tab = build_prediction_table(gap, eta, "in")
            origin = np.array(grid.shape(j)) // 2
            via_table = tab.weights @ data.values_at(j, origin + tab.shifts).ravel()
            E, _ = rim_offsets(gap, eta)
            direct = data.values_at(grid.max_level, (origin << gap) + E).sum()
            if abs(via_table - direct) > 1e-12 * (1 + abs(direct)):
                return False
    return True


def _equivalence():
    grid = Grid(2, 2, 5)
    s = advection_d2q4()
    x = (np.arange(32) + 0.5) / 32
    u = np.exp(-40 * ((x[:, None] - 0.4) ** 2 + (x[None] - 0.5) ** 2))
    f0 = equilibrium_field(grid, s, u[..., None])
    b = uniform_boundaries(2)
    sol = AdaptiveSolver(f0, s, b, 0.0, 1)
    ref = f0.values.reshape(32, 32, 4)
    for _ in range(10):
        sol.step()
        ref = reference_step(ref, s, b)
    fin = TreeData(sol.field).finest()
    # the solver state is post-collision, the reference one post-stream
    return float(np.abs(fin - reference_collide(ref, s)).max()) <= 1e-12


def _mass():
    grid = Grid(1, 2, 7)
    s = advection_d1q2()
    x = (np.arange(128) + 0.5) / 128
    f0 = equilibrium_field(grid, s, (np.abs(x - 0.4) < 0.1).astype(float)[:, None])
    b = uniform_boundaries(1, "bounce_back")
    sol = AdaptiveSolver(f0, s, b, 1e-3, 1)
    m0 = f0.totals().sum()
    for _ in range(20):
        sol.step()
    return abs(sol.field.totals().sum() - m0) <= 1e-12 * abs(m0)


def _grading():
    grid = Grid(2, 1, 6)
    rng = np.random.default_rng(2)
    f = FieldSet(CellTree.full(grid), rng.normal(size=(grid.size(6), 1)) * (rng.random((grid.size(6), 1)) < 0.02))
    t = adapt(f, 1e-2, 1, np.array([[1, 0]])).tree
    return is_graded(t, 1) and make_graded(t, 1) == t


CHECKS = [
    ("prediction coefficients", _coefficients),
    ("prediction consistency", _sibling_sum),
    ("table equals recursion", _table_vs_recursive),
    ("eps=0 equivalence", _equivalence),
    ("closed-box mass", _mass),
    ("adapted trees graded", _grading),
]


def run_all(echo=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            res = bool(fn())
        except Exception as exc:  # report and carry on
            res = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        echo(f"{'PASS' if res else 'FAIL'} {name}")
        ok &= res
    return ok
