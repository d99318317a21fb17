"""Lattice-Boltzmann kernels on adaptive and uniform meshes.

Collision is local to each leaf. Streaming on a leaf of level ``j`` is
written as pseudo-fluxes through the rim of its finest-level cover ``B``:

    f_new = f* + 2^{-d(J-j)} (sum_E f** - sum_A f**)

where ``f**`` is the reconstructed post-collision field at the finest level,
``E = (B - eta) minus B`` and ``A = B minus (B - eta)``. Sums are taken
through precomputed same-level tables when the surrounding mesh allows it,
and through explicit reconstruction otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import FieldSet
from .mesh import CellId, CellTree, Grid, dilate, ravel
from .multiresolution import PredictionConfig, TreeData, build_prediction_table, rim_offsets


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class EquilibriumDomainError(ArithmeticError):
    """Equilibrium undefined (e.g. nonpositive density). ``rows`` are offending leaf rows."""

    def __init__(self, message: str, rows=None, cell: CellId | None = None):
        super().__init__(message)
        self.rows = rows
        self.cell = cell


class BoundaryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SchemeSpec:
    """A (possibly vectorial) lattice-Boltzmann scheme.

    ``equilibrium`` maps moments ``(n, q)`` to equilibrium moments ``(n, q)``;
    it must only read the conserved columns.
    """

    name: str
    velocities: np.ndarray
    lam: float
    M: np.ndarray
    S: np.ndarray
    equilibrium: Callable[[np.ndarray], np.ndarray]
    conserved: tuple[int, ...]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.velocities, dtype=np.int64)
        if v.ndim != 2:
            raise ValueError("velocities must be (q, d)")
        M = np.asarray(self.M, dtype=np.float64)
        S = np.asarray(self.S, dtype=np.float64)
        q = v.shape[0]
        if M.shape != (q, q) or S.shape != (q,):
            raise ValueError("M must be q x q and S of length q")
        if np.any((S < 0) | (S > 2)):
            raise ValueError("relaxation rates must lie in [0, 2]")
        if np.any(S[list(self.conserved)] != 0):
            raise ValueError("conserved moments must have zero relaxation")
        if self.lam <= 0:
            raise ValueError("lattice velocity must be positive")
        try:
            Minv = np.linalg.inv(M)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(f"moment matrix of {self.name} is singular") from exc
        if np.linalg.cond(M) > 1e12:
            raise SingularMatrixError(f"moment matrix of {self.name} is ill-conditioned")
        opp = np.full(q, -1, dtype=np.int64)
        for h in range(q):
            match = np.flatnonzero((v == -v[h]).all(1))
            # pair populations inside the same block of a vectorial scheme
            nb = self.params.get("block", q)
            match = [m for m in match if m // nb == h // nb]
            if match:
                opp[h] = match[0]
        for name, arr in (("velocities", v), ("M", M), ("S", S), ("Minv", Minv), ("opposite", opp)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def q(self) -> int:
        return self.velocities.shape[0]

    @property
    def dim(self) -> int:
        return self.velocities.shape[1]

    def dt(self, grid: Grid) -> float:
        return grid.dx / self.lam

    def equilibrium_populations(self, conserved_values) -> np.ndarray:
        """Populations at equilibrium for conserved moment values ``(n, nc)``."""
        cv = np.atleast_2d(np.asarray(conserved_values, dtype=np.float64))
        m = np.zeros((cv.shape[0], self.q))
        m[:, list(self.conserved)] = cv
        return from_moments(self.equilibrium(m), self)


def to_moments(f: np.ndarray, scheme: SchemeSpec) -> np.ndarray:
    return np.asarray(f) @ scheme.M.T


def from_moments(m: np.ndarray, scheme: SchemeSpec) -> np.ndarray:
    return np.asarray(m) @ scheme.Minv.T


def collide_values(f: np.ndarray, scheme: SchemeSpec) -> np.ndarray:
    """Relaxation in moment space on rows of ``f``; conserved moments kept."""
    m = f @ scheme.M.T
    meq = scheme.equilibrium(m)
    mp = m + scheme.S * (meq - m)
    cons = list(scheme.conserved)
    mp[:, cons] = m[:, cons]
    return mp @ scheme.Minv.T


def collide(field: FieldSet, scheme: SchemeSpec) -> FieldSet:
    try:
        return field.with_values(collide_values(field.values, scheme))
    except EquilibriumDomainError as exc:
        row = int(np.atleast_1d(exc.rows)[0]) if exc.rows is not None else None
        cell = field.cell_of_row(row) if row is not None else None
        raise EquilibriumDomainError(f"{exc} at cell {cell}", exc.rows, cell) from None


def compute_EA(cell: CellId, eta, max_level: int) -> tuple[set, set]:
    """Finest-level incoming (E) and outgoing (A) rim cells of a leaf."""
    gap = max_level - cell.level
    if gap < 0:
        raise ValueError("cell finer than the finest level")
    eta = tuple(int(v) for v in np.atleast_1d(eta))
    E, A = rim_offsets(gap, eta)
    K = np.array(cell.index) << gap
    return ({tuple(int(v) for v in K + e) for e in E}, {tuple(int(v) for v in K + a) for a in A})


# ---------------------------------------------------------------- boundaries

BOUNDARY_KINDS = ("copy", "bounce_back", "anti_bounce_back")


@dataclass(frozen=True)
class Wall:
    """Boundary rule on one face; ``feq`` is the wall equilibrium (populations)."""

    kind: str = "copy"
    feq: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise BoundaryError(f"unknown boundary kind {self.kind!r}")


def uniform_boundaries(dim: int, kind: str = "copy") -> tuple[tuple[Wall, Wall], ...]:
    return tuple((Wall(kind), Wall(kind)) for _ in range(dim))


def check_boundaries(boundaries, scheme: SchemeSpec):
    if len(boundaries) != scheme.dim:
        raise BoundaryError("one (lo, hi) wall pair per axis is required")
    for pair in boundaries:
        for w in pair:
            if w.kind != "copy" and np.any(scheme.opposite < 0):
                raise BoundaryError(f"{w.kind} needs an opposite velocity for every population")
            if w.feq is not None and len(w.feq) != scheme.q:
                raise BoundaryError("wall equilibrium must have q entries")


def ghost_values(ghosts: np.ndarray, h: int, scheme: SchemeSpec, boundaries, shape,
                 lookup: Callable[[np.ndarray, int], np.ndarray],
                 reflect_lookup: Callable[[np.ndarray, int], np.ndarray] | None = None) -> np.ndarray:
    """Values of population ``h`` on finest-level cells outside the domain.

    ``lookup(cells, h)`` returns post-collision values of population ``h`` at
    in-domain finest cells; copy walls read it. Reflecting walls read
    ``reflect_lookup`` (default: ``lookup``). The face is the first axis found
    out of range.
    """
    reflect_lookup = reflect_lookup or lookup
    shape = np.asarray(shape)
    n = len(ghosts)
    out = np.empty(n)
    lo = ghosts < 0
    hi = ghosts >= shape
    outside = lo | hi
    face_axis = np.argmax(outside, axis=1)
    face_side = hi[np.arange(n), face_axis].astype(int)
    eta = scheme.velocities[h]
    hb = int(scheme.opposite[h])
    for a in range(len(shape)):
        for side in (0, 1):
            sel = (face_axis == a) & (face_side == side)
            if not sel.any():
                continue
            wall = boundaries[a][side]
            g = ghosts[sel]
            if wall.kind == "copy":
                out[sel] = lookup(np.clip(g, 0, shape - 1), h)
                continue
            if hb < 0:
                raise BoundaryError(f"population {h} has no opposite velocity")
            v = reflect_lookup(g + eta, hb)
            if wall.kind == "bounce_back":
                out[sel] = v + (0.0 if wall.feq is None else wall.feq[h] - wall.feq[hb])
            else:
                out[sel] = -v + (0.0 if wall.feq is None else wall.feq[h] + wall.feq[hb])
    return out


def apply_boundary(ghosts: np.ndarray, h: int, kind: str, scheme: SchemeSpec, lookup,
                   shape, feq=None) -> np.ndarray:
    """Single-rule convenience wrapper of :func:`ghost_values`."""
    bnd = tuple((Wall(kind, feq), Wall(kind, feq)) for _ in range(scheme.dim))
    return ghost_values(np.atleast_2d(ghosts), h, scheme, bnd, shape, lookup)


# ---------------------------------------------------------------- adaptive stream

@dataclass
class StreamStats:
    table_leaves: int = 0
    recursive_leaves: int = 0


class Streamer:
    """Adaptive streaming operator for one scheme and set of boundaries.

    ``ghost_eval`` selects how copy walls read interior data: ``direct`` uses
    the value of the covering leaf, ``reconstruct`` the reconstructed
    finest-level value. Reflecting walls always read reconstructed values, the
    same ones the outgoing rim sums use, so they are exactly conservative on
    coarse boundary leaves too.
    """

    chunk = 1 << 17

    def __init__(self, scheme: SchemeSpec, boundaries, cfg: PredictionConfig = PredictionConfig(),
                 ghost_eval: str = "direct", use_tables: bool = True):
        check_boundaries(boundaries, scheme)
        if ghost_eval not in ("direct", "reconstruct"):
            raise ValueError("ghost_eval must be 'direct' or 'reconstruct'")
        self.scheme, self.boundaries, self.cfg = scheme, boundaries, cfg
        self.ghost_eval, self.use_tables = ghost_eval, use_tables
        v = scheme.velocities
        groups: dict[tuple, list[int]] = {}
        for h in range(scheme.q):
            e = tuple(int(x) for x in v[h])
            if any(e):
                groups.setdefault(e, []).append(h)
        self.groups = sorted(groups.items())
        self.stats = StreamStats()

    def tables(self, gap: int):
        return [(e, hs, build_prediction_table(gap, e, "in", self.cfg),
                 build_prediction_table(gap, e, "out", self.cfg)) for e, hs in self.groups]

    def __call__(self, field: FieldSet) -> FieldSet:
        return self.stream(field)

    def stream(self, field: FieldSet) -> FieldSet:
        tree = field.tree
        g = tree.grid
        data = TreeData(field, self.cfg)
        out = field.values.copy()
        for j in g.levels:
            idx = tree.leaf_index(j)
            if len(idx) == 0:
                continue
            rows = np.arange(tree.leaf_rows(j).start, tree.leaf_rows(j).stop)
            gap = g.max_level - j
            tabs = self.tables(gap)
            ok = np.zeros(len(idx), bool)
            if self.use_tables:
                rad = max(max(ti.radius, to.radius) for _, _, ti, to in tabs)
                shape = np.array(g.shape(j))
                ok = ((idx - rad >= 0) & (idx + rad < shape)).all(1)
                if ok.any() and gap > 0:
                    near = dilate(tree.refined(j), rad)
                    ok &= ~near[tuple(idx.T)]
                if ok.any():
                    self._table_path(data, j, idx[ok], rows[ok], tabs, out)
            if (~ok).any():
                self._recursive_path(data, j, idx[~ok], rows[~ok], out)
            self.stats.table_leaves += int(ok.sum())
            self.stats.recursive_leaves += int((~ok).sum())
        return field.with_values(out)

    def _table_path(self, data: TreeData, j, idx, rows, tabs, out):
        d = data.grid.dim
        gap = data.grid.max_level - j
        scale = 2.0 ** (-d * gap)
        union = np.unique(np.concatenate([np.concatenate([ti.shifts, to.shifts]) for _, _, ti, to in tabs]), axis=0)
        upos = {tuple(s): i for i, s in enumerate(union)}
        shape = data.grid.shape(j)
        step = max(1, self.chunk // len(union))
        for c in range(0, len(idx), step):
            ix, rw = idx[c:c + step], rows[c:c + step]
            cells = (ix[:, None, :] + union[None]).reshape(-1, d)
            lin = ravel(cells, shape)
            ulin, inv = np.unique(lin, return_inverse=True)
            vals = data.values_at(j, np.stack(np.unravel_index(ulin, shape), -1))
            inv = inv.reshape(len(ix), len(union))
            for _, hs, ti, to in tabs:
                pin = [upos[tuple(s)] for s in ti.shifts]
                pout = [upos[tuple(s)] for s in to.shifts]
                sin = np.zeros((len(ix), len(hs)))
                for p, w in zip(pin, ti.weights):
                    sin += w * vals[inv[:, p]][:, hs]
                sout = np.zeros((len(ix), len(hs)))
                for p, w in zip(pout, to.weights):
                    sout += w * vals[inv[:, p]][:, hs]
                out[np.ix_(rw, hs)] += scale * (sin - sout)

    def _finest_lookup(self, data: TreeData):
        g = data.grid
        tree = data.tree
        if self.ghost_eval == "reconstruct":
            return lambda cells, h: data.values_at(g.max_level, cells)[:, h]

        def lookup(cells, h):
            res = np.full(len(cells), np.nan)
            todo = np.ones(len(cells), bool)
            for j in g.levels:
                if not todo.any():
                    break
                k = cells[todo] >> (g.max_level - j)
                hit = tree.leaf_mask(j)[tuple(k.T)]
                if hit.any():
                    where = np.flatnonzero(todo)[hit]
                    res[where] = data.values[j][tree.tree_slot(j)[tuple(k[hit].T)], h]
                    todo[where] = False
            return res
        return lookup

    def _recursive_path(self, data: TreeData, j, idx, rows, out):
        g = data.grid
        d, J = g.dim, g.max_level
        gap = J - j
        scale = 2.0 ** (-d * gap)
        fshape = np.array(g.shape(J))
        lookup = None
        rims = [(np.array(e), hs, rim_offsets(gap, e)) for e, hs in self.groups]
        per_leaf = sum(len(E) + len(A) for _, _, (E, A) in rims)
        step = max(1, 4 * self.chunk // per_leaf)
        for c in range(0, len(idx), step):
            K = idx[c:c + step] << gap
            rw = rows[c:c + step]
            # one batched reconstruction for every rim cell (and reflected ghost) of the chunk
            blocks, queries = [], []
            for e, hs, (E, A) in rims:
                for rim in (E, A):
                    cells = (K[:, None, :] + rim[None]).reshape(-1, d)
                    inside = ((cells >= 0) & (cells < fshape)).all(1)
                    blocks.append((cells, inside))
                    queries.append(cells[inside])
                    if not inside.all():
                        queries.append(np.clip(cells[~inside] + e, 0, fshape - 1))
            ulin = np.unique(ravel(np.concatenate(queries), fshape))
            uvals = data.values_at(J, np.stack(np.unravel_index(ulin, fshape), -1))

            def recon(cells, h):
                lin = ravel(np.clip(cells, 0, fshape - 1), fshape)
                return uvals[np.searchsorted(ulin, lin), h]

            for b, (e, hs, (E, A)) in enumerate(rims):
                sums = []
                for side, rim in enumerate((E, A)):
                    cells, inside = blocks[2 * b + side]
                    vals = np.empty((len(cells), len(hs)))
                    if inside.any():
                        lin = ravel(cells[inside], fshape)
                        vals[inside] = uvals[np.searchsorted(ulin, lin)][:, hs]
                    if not inside.all():
                        lookup = lookup or self._finest_lookup(data)
                        for i, h in enumerate(hs):
                            vals[~inside, i] = ghost_values(cells[~inside], h, self.scheme,
                                                            self.boundaries, fshape, lookup, recon)
                    sums.append(vals.reshape(len(K), len(rim), len(hs)).sum(axis=1))
                out[np.ix_(rw, hs)] += scale * (sums[0] - sums[1])


def stream(field: FieldSet, scheme: SchemeSpec, boundaries=None,
           cfg: PredictionConfig = PredictionConfig(), **kw) -> FieldSet:
    boundaries = boundaries or uniform_boundaries(scheme.dim)
    return Streamer(scheme, boundaries, cfg, **kw).stream(field)


# ---------------------------------------------------------------- reference solver

def reference_stream(f: np.ndarray, scheme: SchemeSpec, boundaries) -> np.ndarray:
    """Exact shift on a uniform grid; ``f`` has shape ``(*shape, q)``."""
    shape = np.array(f.shape[:-1])
    out = np.empty_like(f)

    def lookup(cells, h):
        return f[tuple(cells.T) + (h,)]

    for h in range(scheme.q):
        e = scheme.velocities[h]
        src, dst = [], []
        for n, s in zip(shape, e):
            src.append(slice(max(-s, 0), n - max(s, 0)))
            dst.append(slice(max(s, 0), n + min(s, 0)))
        out[tuple(dst) + (h,)] = f[tuple(src) + (h,)]
        if not any(e):
            continue
        miss = np.ones(tuple(shape), bool)
        miss[tuple(dst)] = False
        k = np.argwhere(miss)
        out[tuple(k.T) + (h,)] = ghost_values(k - e, h, scheme, boundaries, shape, lookup)
    return out


def reference_collide(f: np.ndarray, scheme: SchemeSpec) -> np.ndarray:
    return collide_values(f.reshape(-1, scheme.q), scheme).reshape(f.shape)


def reference_step(f: np.ndarray, scheme: SchemeSpec, boundaries=None) -> np.ndarray:
    """Collide then shift on the full finest grid."""
    boundaries = boundaries or uniform_boundaries(scheme.dim)
    return reference_stream(reference_collide(f, scheme), scheme, boundaries)


def uniform_field(grid: Grid, f: np.ndarray) -> FieldSet:
    """Wrap a finest-level array ``(*shape, q)`` as a field on the full tree."""
    return FieldSet(CellTree.full(grid), f.reshape(-1, f.shape[-1]))
