"""Harten-type multiresolution on cell averages.

Projection averages children; prediction interpolates child averages from a
centred ``(2g+1)^d`` block of parent-level averages. Details are the gap
between stored and predicted averages and drive mesh adaptation.

``TreeData`` holds values on every complete-tree cell and evaluates any cell
of any level: stored values where the tree has them, recursive prediction
(zero details) elsewhere. Everything that needs reconstructed data goes
through it: details, solution transfer, pseudo-fluxes and diagnostics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .fields import FieldSet
from .mesh import (CellId, CellTree, Grid, box_offsets, coarsen_any, coarsen_max, insert_cells,
                   make_graded, ravel, upsample)

# exact interpolation coefficients c_1..c_g for g = 1, 2, 3
COEFFICIENTS = {
    1: (Fraction(-1, 8),),
    2: (Fraction(-22, 128), Fraction(3, 128)),
    3: (Fraction(-201, 1024), Fraction(11, 256), Fraction(-5, 1024)),
}


class SingularSystemError(ArithmeticError):
    pass


class MissingStencilError(ValueError):
    pass


class OutOfDomainError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionConfig:
    """Prediction stencil half-width ``gamma`` (order ``2 gamma + 1``).

    ``pair_sign`` multiplies the weights of stencil cells offset along exactly
    two axes. ``+1`` is the tensor product of the 1D operator (exact on
    every polynomial of degree <= 2 gamma per axis); ``-1`` flips the sign of
    those corner terms, as in some published weight diagrams.
    """

    gamma: int = 1
    pair_sign: int = 1

    def __post_init__(self):
        if self.gamma not in COEFFICIENTS:
            raise ValueError(f"gamma must be 1, 2 or 3, got {self.gamma}")
        if self.pair_sign not in (1, -1):
            raise ValueError("pair_sign must be +1 or -1")

    @property
    def coefficients(self) -> tuple[Fraction, ...]:
        return COEFFICIENTS[self.gamma]

    @property
    def order(self) -> int:
        return 2 * self.gamma + 1


def derive_prediction_weights(gamma: int) -> tuple[Fraction, ...]:
    """Coefficients from matching the cell means of a degree-2g polynomial.

    Cells ``k+j`` (``|j| <= g``) are ``[j - 1/2, j + 1/2]``; the left child
    is ``[-1/2, 0]``. The weight of ``f_{k+a}`` in the left-child mean is
    ``c_a``.
    """
    import sympy as sp

    if gamma < 1:
        raise ValueError("gamma must be positive")
    half = sp.Rational(1, 2)
    js = range(-gamma, gamma + 1)
    degs = range(2 * gamma + 1)
    T = sp.Matrix([[((j + half) ** (m + 1) - (j - half) ** (m + 1)) / (m + 1) for m in degs] for j in js])
    if T.det() == 0:
        raise SingularSystemError(f"moment system singular for gamma={gamma}")
    left = sp.Matrix([[2 * (0 - (-half) ** (m + 1)) / (m + 1) for m in degs]])
    w = left * T.inv()
    return tuple(Fraction(int(sp.fraction(w[gamma + a])[0]), int(sp.fraction(w[gamma + a])[1]))
                 for a in range(1, gamma + 1))


# ------------------------------------------------------------ stencils

def child_codes(dim: int) -> np.ndarray:
    """All ``delta`` in lexicographic order, shape ``(2^d, d)``."""
    return np.array(list(itertools.product((0, 1), repeat=dim)), dtype=np.int64)


def child_code(delta: np.ndarray) -> np.ndarray:
    """Row number of ``delta`` within ``child_codes``."""
    d = delta.shape[-1]
    return (delta * (1 << np.arange(d - 1, -1, -1))).sum(-1)


@lru_cache(maxsize=None)
def _stencil_exact(gamma: int, pair_sign: int, dim: int):
    c = COEFFICIENTS[gamma]
    w1 = {0: {0: Fraction(1)}, 1: {0: Fraction(1)}}
    for a in range(1, gamma + 1):
        w1[0][a], w1[0][-a] = c[a - 1], -c[a - 1]
        w1[1][a], w1[1][-a] = -c[a - 1], c[a - 1]
    offs = box_offsets(gamma, dim)
    table = []
    for delta in child_codes(dim):
        row = []
        for o in offs:
            w = Fraction(1)
            for di, oi in zip(delta, o):
                w *= w1[int(di)][int(oi)]
            if np.count_nonzero(o) == 2:
                w *= pair_sign
            row.append(w)
        table.append(tuple(row))
    return offs, tuple(table)


def prediction_stencil(cfg: PredictionConfig, dim: int, exact: bool = False):
    """``(offsets, weights)``: offsets ``(S, d)``, weights ``(2^d, S)``."""
    offs, table = _stencil_exact(cfg.gamma, cfg.pair_sign, dim)
    if exact:
        return offs.copy(), [list(r) for r in table]
    return offs.copy(), np.array([[float(w) for w in r] for r in table])


def project(child_values) -> float:
    v = np.asarray(child_values, dtype=np.float64).ravel()
    n = v.size
    if n < 2 or n & (n - 1):
        raise ValueError(f"expected 2^d child values, got {n}")
    return float(v.sum() / n)


def predict(stencil, delta, cfg: PredictionConfig = PredictionConfig()) -> float:
    """Predicted mean of child ``delta`` from the parent-centred block ``stencil``."""
    s = np.asarray(stencil, dtype=np.float64)
    d = s.ndim
    if s.shape != (cfg.order,) * d or d not in (1, 2, 3):
        raise MissingStencilError(f"stencil must have shape {(cfg.order,) * max(d, 1)}, got {s.shape}")
    if np.isnan(s).any():
        raise MissingStencilError("stencil has missing (NaN) values")
    delta = np.atleast_1d(np.asarray(delta, dtype=np.int64))
    if delta.shape != (d,):
        raise ValueError("delta must have one entry per axis")
    _, w = prediction_stencil(cfg, d)
    return float(w[int(child_code(delta))] @ s.ravel())


def predict_children(stencil, cfg: PredictionConfig = PredictionConfig()) -> np.ndarray:
    s = np.asarray(stencil, dtype=np.float64)
    return np.array([predict(s, dl, cfg) for dl in child_codes(s.ndim)])


def consistency_check(parent_value: float, neighborhood, cfg: PredictionConfig = PredictionConfig(),
                      rtol: float = 1e-13) -> bool:
    mean = project(predict_children(neighborhood, cfg))
    scale = max(1.0, abs(parent_value), float(np.abs(neighborhood).max()))
    return abs(mean - parent_value) <= rtol * scale


# ------------------------------------------------------------ tree values

class TreeData:
    """Values on every complete-tree cell plus on-demand reconstruction.

    Out-of-domain indices are clamped to the nearest interior cell of the
    same level (zero-order ghost extension).
    """

    chunk = 1 << 16

    def __init__(self, field: FieldSet, cfg: PredictionConfig = PredictionConfig()):
        tree = field.tree
        self.tree, self.cfg, self.field = tree, cfg, field
        self.grid = g = tree.grid
        self.q = field.q
        self.offsets, self.weights = prediction_stencil(cfg, g.dim)
        self.codes = child_codes(g.dim)
        vals = {}
        for j in g.levels:
            v = np.empty((int(tree.in_tree(j).sum()), self.q))
            v[tree.leaf_tree_rows(j)] = field.level_values(j)
            vals[j] = v
        for j in range(g.max_level - 1, g.min_level - 1, -1):
            idx = np.argwhere(tree.refined(j))
            if len(idx) == 0:
                continue
            rows = tree.tree_slot(j)[tuple(idx.T)]
            slot = tree.tree_slot(j + 1)
            acc = np.zeros((len(idx), self.q))
            for dl in self.codes:
                acc += vals[j + 1][slot[tuple((2 * idx + dl).T)]]
            vals[j][rows] = acc / len(self.codes)
        self.values = vals

    def clamp(self, level: int, idx: np.ndarray) -> np.ndarray:
        hi = np.array(self.grid.shape(level)) - 1
        return np.clip(idx, 0, hi)

    def values_at(self, level: int, idx: np.ndarray) -> np.ndarray:
        """Values of cells ``idx`` (``(n, d)``) at ``level``, shape ``(n, q)``."""
        idx = self.clamp(level, np.asarray(idx, dtype=np.int64).reshape(-1, self.grid.dim))
        slot = self.tree.tree_slot(level)[tuple(idx.T)]
        hit = slot >= 0
        if hit.all():
            return self.values[level][slot]
        out = np.empty((len(idx), self.q))
        out[hit] = self.values[level][slot[hit]]
        out[~hit] = self.predict_at(level, idx[~hit])
        return out

    def predict_at(self, level: int, idx: np.ndarray) -> np.ndarray:
        """Predicted values of in-domain cells ``idx`` from the parent level."""
        if level <= self.grid.min_level:
            raise OutOfDomainError("no prediction below the coarsest level")
        n = len(idx)
        if n > self.chunk:
            return np.concatenate([self.predict_at(level, idx[i:i + self.chunk])
                                   for i in range(0, n, self.chunk)])
        d = self.grid.dim
        pshape = self.grid.shape(level - 1)
        lin = ravel(idx >> 1, pshape)
        ulin, inv = np.unique(lin, return_inverse=True)
        upar = np.stack(np.unravel_index(ulin, pshape), -1)
        st = self.clamp(level - 1, (upar[:, None, :] + self.offsets[None]).reshape(-1, d))
        slin = ravel(st, pshape)
        uslin, sinv = np.unique(slin, return_inverse=True)
        sval = self.values_at(level - 1, np.stack(np.unravel_index(uslin, pshape), -1))
        sinv = sinv.reshape(len(ulin), -1)[inv]
        w = self.weights[child_code(idx & 1)]
        out = np.zeros((n, self.q))
        for s in range(self.offsets.shape[0]):
            out += w[:, s, None] * sval[sinv[:, s]]
        return out

    def finest(self) -> np.ndarray:
        """Reconstruction on the whole finest grid, shape ``(*shape, q)``."""
        g = self.grid
        shape = g.shape(g.max_level)
        idx = np.argwhere(np.ones(shape, bool))
        return self.values_at(g.max_level, idx).reshape(*shape, self.q)


def reconstruct(tree: CellTree, field: FieldSet, target: CellId,
                cfg: PredictionConfig = PredictionConfig()) -> np.ndarray:
    """Reconstructed finest-level value of ``target`` (one entry per population)."""
    g = tree.grid
    if target.level != g.max_level:
        raise ValueError("target must be a finest-level cell")
    if not g.contains(target):
        raise OutOfDomainError(f"{target} lies outside the domain")
    return TreeData(field, cfg).values_at(g.max_level, np.array([target.index]))[0]


def reconstruct_finest(field: FieldSet, cfg: PredictionConfig = PredictionConfig()) -> np.ndarray:
    return TreeData(field, cfg).finest()


# ------------------------------------------------------------ details

@dataclass
class DetailField:
    """Details of a tree.

    ``metric[j]`` is a dense array over level ``j`` (below the finest): for
    refined cells, the largest detail magnitude over their children and all
    populations; zero elsewhere. ``values[j]`` (optional) holds the details
    of the level-``j`` tree cells in ``tree_index`` order.
    """

    tree: CellTree
    metric: dict
    values: dict | None = None

    def group_metric(self, cell: CellId) -> float:
        return float(self.metric[cell.level][cell.index])


def compute_details(field: FieldSet, cfg: PredictionConfig = PredictionConfig(),
                    keep_values: bool = False, data: TreeData | None = None) -> DetailField:
    tree = field.tree
    g = tree.grid
    data = data or TreeData(field, cfg)
    metric, values = {}, ({} if keep_values else None)
    for j in range(g.min_level + 1, g.max_level + 1):
        idx = tree.tree_index(j)
        dense = np.zeros(g.shape(j))
        parts = []
        for i in range(0, len(idx), TreeData.chunk):
            sl = slice(i, i + TreeData.chunk)
            det = data.values[j][sl] - data.predict_at(j, idx[sl])
            dense[tuple(idx[sl].T)] = np.abs(det).max(axis=1)
            if keep_values:
                parts.append(det)
        metric[j - 1] = coarsen_max(dense)
        if keep_values:
            values[j] = np.concatenate(parts) if parts else np.zeros((0, field.q))
    return DetailField(tree, metric, values)


def level_threshold(eps: float, level: int, grid: Grid) -> float:
    return 2.0 ** (grid.dim * (level - grid.max_level)) * eps


def threshold(tree: CellTree, details: DetailField, eps: float) -> CellTree:
    """Drop every sibling group whose metric is below its level threshold.

    The result is the smallest tree holding all kept groups.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    g = tree.grid
    jm = g.min_level
    keep = [tree.refined(p) & (details.metric[p] >= level_threshold(eps, p + 1, g))
            for p in range(jm, g.max_level)]
    for i in range(len(keep) - 2, -1, -1):
        keep[i] |= coarsen_any(keep[i + 1])
    return CellTree(g, keep)


def _shift_mask(mask: np.ndarray, s) -> np.ndarray:
    """``out[k] = mask[k + s]`` with zero fill."""
    out = np.zeros_like(mask)
    src, dst = [], []
    for n, si in zip(mask.shape, s):
        si = int(si)
        if abs(si) >= n:
            return out
        src.append(slice(max(si, 0), n + min(si, 0)))
        dst.append(slice(max(-si, 0), n + min(-si, 0)))
    out[tuple(dst)] = mask[tuple(src)]
    return out


def enlarge(tree: CellTree, details: DetailField, eps: float, mu: int, velocities) -> CellTree:
    """Add same-level upwind neighbours and refine where details blow up."""
    g = tree.grid
    jm = g.min_level
    vel = {tuple(int(v) for v in e) for e in np.atleast_2d(velocities)} - {(0,) * g.dim}
    refined = [r.copy() for r in tree.refined_masks]
    for j in range(g.max_level, jm, -1):
        m = tree.in_tree(j)
        need = np.zeros_like(m)
        for e in sorted(vel):
            need |= _shift_mask(m, e)
        insert_cells(refined, g, j, need)
    factor = 2.0 ** (mu + g.dim)
    for j in range(jm + 1, g.max_level):
        big = details.metric[j - 1] >= factor * level_threshold(eps, j, g)
        if big.any():
            refined[j - jm] |= tree.in_tree(j) & upsample(big)
    return CellTree(g, refined)


def transfer(data: TreeData, new_tree: CellTree) -> FieldSet:
    """Values on the leaves of ``new_tree`` from the old tree's data."""
    parts = [data.values_at(j, new_tree.leaf_index(j)) for j in new_tree.grid.levels
             if len(new_tree.leaf_index(j))]
    return FieldSet(new_tree, np.concatenate(parts) if parts else np.zeros((0, data.q)))


def adapt_tree(field: FieldSet, eps: float, mu: int, velocities,
               cfg: PredictionConfig = PredictionConfig(), data: TreeData | None = None) -> CellTree:
    data = data or TreeData(field, cfg)
    det = compute_details(field, cfg, data=data)
    thr = threshold(field.tree, det, eps)
    return make_graded(enlarge(thr, det, eps, mu, velocities), cfg.gamma)


def adapt(field: FieldSet, eps: float, mu: int, velocities,
          cfg: PredictionConfig = PredictionConfig()) -> FieldSet:
    """One mesh adaptation: threshold, enlarge, grade, then transfer the data."""
    if not 0 <= mu <= 2 * cfg.gamma + 1:
        raise ValueError(f"mu must lie in [0, {2 * cfg.gamma + 1}]")
    data = TreeData(field, cfg)
    new = adapt_tree(field, eps, mu, velocities, cfg, data)
    if new == field.tree:
        return field
    return transfer(data, new)


def encode(field: FieldSet, eps: float, cfg: PredictionConfig = PredictionConfig()) -> FieldSet:
    """Threshold and grade, keeping exact averages on the retained leaves."""
    data = TreeData(field, cfg)
    det = compute_details(field, cfg, data=data)
    new = make_graded(threshold(field.tree, det, eps), cfg.gamma)
    return transfer(data, new)


# ------------------------------------------------------------ pseudo-flux tables

@lru_cache(maxsize=None)
def rim_offsets(gap: int, eta: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Incoming/outgoing finest cells of a cover block ``B = [0, 2^gap)^d``.

    Returns ``(E, A)`` with ``E = (B - eta) \\ B`` and ``A = B \\ (B - eta)``,
    each sorted in C order, as ``(n, d)`` offsets relative to the block origin.
    """
    eta = np.asarray(eta, dtype=np.int64)
    d = len(eta)
    n = 1 << gap
    m = int(np.abs(eta).max(initial=0))
    size = n + 2 * m
    B = np.zeros((size,) * d, bool)
    B[(slice(m, m + n),) * d] = True
    Bm = _shift_mask(B, eta)  # Bm[x] = B[x + eta]: x in B - eta
    E = np.argwhere(Bm & ~B) - m
    A = np.argwhere(B & ~Bm) - m
    for a in (E, A):
        a.flags.writeable = False
    return E, A


@dataclass(frozen=True)
class PredictionTable:
    """Same-level stencil equivalent to a sum of reconstructed finest values.

    ``sum over rim of reconstructed values == weights @ f[k + shifts]`` when
    every cell of ``support`` around ``k`` is an unrefined tree cell or lies
    below a coarser leaf. ``support`` keeps cells whose weight cancelled.
    """

    gap: int
    eta: tuple[int, ...]
    side: str
    shifts: np.ndarray
    weights: np.ndarray
    support: np.ndarray

    @property
    def radius(self) -> int:
        return int(np.abs(self.support).max(initial=0))


@lru_cache(maxsize=None)
def _table(gap: int, eta: tuple[int, ...], side: str, gamma: int, pair_sign: int):
    d = len(eta)
    E, A = rim_offsets(gap, eta)
    cells = (E if side == "in" else A).astype(np.int64)
    w = np.ones(len(cells))
    offs, W = prediction_stencil(PredictionConfig(gamma, pair_sign), d)
    # level-j ancestors of every finer cell the recursion reads
    support = [cells >> gap]
    for i in range(gap):
        code = child_code(cells & 1)
        new = ((cells >> 1)[:, None, :] + offs[None]).reshape(-1, d)
        nw = (w[:, None] * W[code]).ravel()
        cells, inv = np.unique(new, axis=0, return_inverse=True)
        w = np.bincount(inv.ravel(), weights=nw, minlength=len(cells))
        support.append(cells >> (gap - i - 1))
    support = np.unique(np.concatenate(support), axis=0)
    keep = w != 0
    tab = PredictionTable(gap, eta, side, cells[keep], w[keep], support)
    for a in (tab.shifts, tab.weights, tab.support):
        a.flags.writeable = False
    return tab


def build_prediction_table(gap: int, eta, side: str,
                           cfg: PredictionConfig = PredictionConfig()) -> PredictionTable:
    if gap < 0:
        raise ValueError("gap must be nonnegative")
    if side not in ("in", "out"):
        raise ValueError("side must be 'in' or 'out'")
    eta = tuple(int(v) for v in np.atleast_1d(eta))
    return _table(gap, eta, side, cfg.gamma, cfg.pair_sign)


# ------------------------------------------------------------ static compression

@dataclass
class CompressionReport:
    meshor: float
    memor: float
    l1: float
    linf: float
    n_leaves: int
    tree: CellTree


def compress_array(u: np.ndarray, eps: float, gamma: int = 1, min_level: int = 2,
                   pair_sign: int = 1) -> CompressionReport:
    """Encode a uniform ``2^J`` per axis array and measure the round trip.

    ``l1`` is the cell-measure weighted mean absolute error, ``linf`` the
    largest pointwise one.
    """
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[0]
    if u.ndim not in (1, 2, 3) or any(s != n for s in u.shape) or n < 2 or n & (n - 1):
        raise ValueError(f"input shape {u.shape} is not 2^J per axis in 1 to 3 dimensions")
    J = n.bit_length() - 1
    grid = Grid(u.ndim, min(min_level, J - 1), J)
    cfg = PredictionConfig(gamma, pair_sign)
    enc = encode(FieldSet(CellTree.full(grid), u.reshape(-1, 1)), eps, cfg)
    err = TreeData(enc, cfg).finest()[..., 0] - u
    tree = enc.tree
    full = sum(grid.size(j) for j in grid.levels)
    return CompressionReport(tree.n_leaves / grid.size(J), tree.n_tree_cells / full,
                             float(np.abs(err).mean()), float(np.abs(err).max()), tree.n_leaves, tree)
