"""Concrete schemes and initial data.

* vectorial D2Q4 for the compressible Euler equations,
* D2Q9 (MRT) for weakly compressible Navier-Stokes flow past a disc,
* D3Q6 / D2Q4 / D1Q2 for linear advection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .fields import FieldSet
from .lbm import EquilibriumDomainError, SchemeSpec, Wall
from .mesh import CellTree, Grid

GAMMA_GAS = 1.4
D2Q4_VELOCITIES = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]])


def _d2q4_matrix(lam: float) -> np.ndarray:
    return np.array([[1, 1, 1, 1],
                     [lam, 0, -lam, 0],
                     [0, lam, 0, -lam],
                     [lam ** 2, -lam ** 2, lam ** 2, -lam ** 2]], dtype=float)


def _positive_density(rho: np.ndarray):
    bad = ~(rho > 0)
    if bad.any():
        rows = np.flatnonzero(bad)
        raise EquilibriumDomainError(f"nonpositive density {rho[rows[0]]:.3g}", rows)


# ---------------------------------------------------------------- Euler

def euler_fluxes(u: np.ndarray, gamma_gas: float = GAMMA_GAS):
    """Physical fluxes of conserved variables ``u = (rho, rho u, rho v, E)``."""
    rho, mx, my, E = u.T
    _positive_density(rho)
    vx, vy = mx / rho, my / rho
    p = (gamma_gas - 1.0) * (E - 0.5 * rho * (vx ** 2 + vy ** 2))
    fx = np.stack([mx, mx * vx + p, my * vx, vx * (E + p)], -1)
    fy = np.stack([my, mx * vy, my * vy + p, vy * (E + p)], -1)
    return fx, fy


def euler_d2q4(lam: float = 5.0, s_q=(1.9, 1.75, 1.75, 1.75), s_xy=(1.0, 1.0, 1.0, 1.0),
               gamma_gas: float = GAMMA_GAS) -> SchemeSpec:
    """Four D2Q4 blocks, one per conserved variable, coupled by the equilibria."""
    s_q = np.broadcast_to(np.asarray(s_q, float), (4,))
    s_xy = np.broadcast_to(np.asarray(s_xy, float), (4,))
    if np.any((s_q <= 0) | (s_q >= 2)) or np.any((s_xy <= 0) | (s_xy >= 2)):
        raise ValueError("relaxation rates must lie in (0, 2)")
    Mb = _d2q4_matrix(lam)
    M = np.kron(np.eye(4), Mb)
    S = np.concatenate([[0.0, s_q[i], s_q[i], s_xy[i]] for i in range(4)])
    cons = (0, 4, 8, 12)

    def equilibrium(m):
        u = m[:, cons]
        fx, fy = euler_fluxes(u, gamma_gas)
        meq = np.zeros_like(m)
        meq[:, 0::4], meq[:, 1::4], meq[:, 2::4] = u, fx, fy
        return meq

    return SchemeSpec("euler_d2q4", np.tile(D2Q4_VELOCITIES, (4, 1)), lam, M, S, equilibrium, cons,
                      {"block": 4, "gamma_gas": gamma_gas})


def primitive_to_conserved(rho, u, v, p, gamma_gas: float = GAMMA_GAS) -> np.ndarray:
    rho, u, v, p = np.broadcast_arrays(*(np.asarray(a, float) for a in (rho, u, v, p)))
    E = p / (gamma_gas - 1.0) + 0.5 * rho * (u ** 2 + v ** 2)
    return np.stack([rho, rho * u, rho * v, E], -1)


def lax_liu_states(config_id: int) -> np.ndarray:
    """Quadrant states ``rho u v p`` in order UR, UL, LL, LR."""
    if config_id not in (3, 12):
        raise ValueError(f"unknown Lax-Liu configuration {config_id}")
    text = resources.files("mrlbm.data").joinpath(f"lax_liu_{config_id}.txt").read_text()
    rows = [list(map(float, ln.split())) for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    arr = np.array(rows)
    if arr.shape != (4, 4):
        raise ValueError("quadrant file must hold four lines of four numbers")
    return arr


def quadrant_conserved(grid: Grid, states: np.ndarray, gamma_gas: float = GAMMA_GAS) -> np.ndarray:
    """Finest-level conserved variables ``(*shape, 4)`` of a four-quadrant datum."""
    if grid.dim != 2 or grid.base != (1, 1) or grid.max_level < 1:
        raise ValueError("quadrant data need the unit square and max_level >= 1")
    n = 1 << grid.max_level
    h = n // 2
    cons = primitive_to_conserved(*states.T, gamma_gas=gamma_gas)
    out = np.empty((n, n, 4))
    out[h:, h:], out[:h, h:], out[:h, :h], out[h:, :h] = cons
    return out


def lax_liu_initial(config_id: int, grid: Grid, scheme: SchemeSpec | None = None) -> FieldSet:
    scheme = scheme or euler_d2q4()
    cons = quadrant_conserved(grid, lax_liu_states(config_id), scheme.params.get("gamma_gas", GAMMA_GAS))
    return equilibrium_field(grid, scheme, cons)


def equilibrium_field(grid: Grid, scheme: SchemeSpec, conserved: np.ndarray) -> FieldSet:
    """Equilibrium populations on the full finest tree from conserved data ``(*shape, nc)``."""
    f = scheme.equilibrium_populations(conserved.reshape(-1, len(scheme.conserved)))
    return FieldSet(CellTree.full(grid), f)


# ---------------------------------------------------------------- Navier-Stokes

D2Q9_VELOCITIES = np.array([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1],
                            [1, 1], [-1, 1], [-1, -1], [1, -1]])


def d2q9_matrix(lam: float) -> np.ndarray:
    l1, l2, l3, l4 = lam, lam ** 2, lam ** 3, lam ** 4
    return np.array([
        [1, 1, 1, 1, 1, 1, 1, 1, 1],
        [0, l1, 0, -l1, 0, l1, -l1, -l1, l1],
        [0, 0, l1, 0, -l1, l1, l1, -l1, -l1],
        [-4 * l2, -l2, -l2, -l2, -l2, 2 * l2, 2 * l2, 2 * l2, 2 * l2],
        [0, -2 * l3, 0, 2 * l3, 0, l3, -l3, -l3, l3],
        [0, 0, -2 * l3, 0, 2 * l3, l3, l3, -l3, -l3],
        [4 * l4, -2 * l4, -2 * l4, -2 * l4, -2 * l4, l4, l4, l4, l4],
        [0, l2, -l2, l2, -l2, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, l2, -l2, l2, -l2]], dtype=float)


def ns_d2q9(lam: float = 1.0, Re: float = 1200.0, rho0: float = 1.0, u0: float = 0.05,
            L: float = 0.1, dx: float = 2.0 ** -7, s1: float = 1.5) -> SchemeSpec:
    """Lallemand-Luo D2Q9; the shear rate ``s2`` is set from the Reynolds number.

    ``dx`` is the finest space step (it fixes the time step ``dx / lam``).
    """
    if Re <= 0 or rho0 <= 0 or L <= 0 or lam <= 0:
        raise ValueError("Re, rho0, L and lam must be positive")
    cs2 = lam ** 2 / 3.0
    if abs(u0) >= 0.3 * np.sqrt(cs2):
        raise ValueError("|u0| must be small against the sound speed")
    if not 0 < s1 < 2:
        raise ValueError("s1 must lie in (0, 2)")
    mu = rho0 * u0 * L / Re
    dt = dx / lam
    s2 = 1.0 / (0.5 + mu / (cs2 * dt * rho0))

    def equilibrium(m):
        rho, qx, qy = m[:, 0], m[:, 1], m[:, 2]
        _positive_density(rho)
        q2 = (qx ** 2 + qy ** 2) / rho
        meq = np.empty_like(m)
        meq[:, 0], meq[:, 1], meq[:, 2] = rho, qx, qy
        meq[:, 3] = 3.0 * (-2.0 * cs2 * rho + q2)
        meq[:, 4], meq[:, 5] = -3.0 * cs2 * qx, -3.0 * cs2 * qy
        meq[:, 6] = 9.0 * (cs2 ** 2 * rho - cs2 * q2)
        meq[:, 7] = (qx ** 2 - qy ** 2) / rho
        meq[:, 8] = qx * qy / rho
        return meq

    S = np.array([0, 0, 0, s1, s1, s1, s1, s2, s2], float)
    return SchemeSpec("ns_d2q9", D2Q9_VELOCITIES, lam, d2q9_matrix(lam), S, equilibrium, (0, 1, 2),
                      {"Re": Re, "rho0": rho0, "u0": u0, "L": L, "mu": mu, "s2": s2, "momentum": (1, 2)})


def ns_boundaries(scheme: SchemeSpec):
    """Moving-wall bounce-back on inlet, top and bottom; copy on the outlet."""
    p = scheme.params
    feq = tuple(scheme.equilibrium_populations([[p["rho0"], p["rho0"] * p["u0"], 0.0]])[0])
    bb = Wall("bounce_back", feq)
    return ((bb, Wall("copy")), (bb, bb))


@dataclass
class ObstacleSpec:
    """Disc obstacle; volume fractions are cached per tree."""

    center: tuple[float, float] = (0.5, 0.5)
    radius: float = 0.05
    samples: int = 16
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def cell_fractions(self, level: int, idx: np.ndarray, samples: int | None = None) -> np.ndarray:
        """Fraction of each cell covered by the disc (regular subsampling)."""
        n = samples or self.samples
        h = 2.0 ** -level
        t = (np.arange(n) + 0.5) / n
        sx, sy = np.meshgrid(t, t, indexing="ij")
        out = np.zeros(len(idx))
        c = np.asarray(self.center)
        lo, hi = idx * h, (idx + 1) * h
        near = ((hi > c - self.radius) & (lo < c + self.radius)).all(1)
        if near.any():
            x = (idx[near, 0, None] + sx.ravel()[None]) * h - c[0]
            y = (idx[near, 1, None] + sy.ravel()[None]) * h - c[1]
            out[near] = (x * x + y * y <= self.radius ** 2).mean(1)
        return out

    def fractions(self, tree: CellTree) -> np.ndarray:
        if self._cache is not None and self._cache[0] is tree:
            return self._cache[1]
        alpha = np.concatenate([self.cell_fractions(j, tree.leaf_index(j)) for j in tree.grid.levels])
        self._cache = (tree, alpha)
        return alpha


def apply_obstacle(field: FieldSet, obstacle: ObstacleSpec, scheme: SchemeSpec) -> FieldSet:
    """Blend leaves covered by the obstacle toward the resting equilibrium."""
    alpha = obstacle.fractions(field.tree)
    hit = np.flatnonzero(alpha)
    if len(hit) == 0:
        return field
    rest = scheme.equilibrium_populations([[scheme.params["rho0"], 0.0, 0.0]])[0]
    f = field.values.copy()
    a = alpha[hit, None]
    f[hit] = a * rest + (1.0 - a) * f[hit]
    return field.with_values(f)


# ---------------------------------------------------------------- advection

def _advection(name: str, velocities, M, S, V, lam) -> SchemeSpec:
    V = np.asarray(V, float)
    if np.any(np.abs(V) > lam):
        raise ValueError("advection velocity exceeds the lattice velocity")
    d = V.size

    def equilibrium(m):
        meq = np.zeros_like(m)
        meq[:, 0] = m[:, 0]
        meq[:, 1:1 + d] = m[:, :1] * V
        return meq

    return SchemeSpec(name, velocities, lam, M, S, equilibrium, (0,), {"V": tuple(V)})


def advection_d3q6(lam: float = 1.0, V=(0.25, 0.25, 0.25), s1: float = 1.4, s2: float = 1.0) -> SchemeSpec:
    l2 = lam ** 2
    vel = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]])
    M = np.array([[1, 1, 1, 1, 1, 1],
                  [lam, -lam, 0, 0, 0, 0],
                  [0, 0, lam, -lam, 0, 0],
                  [0, 0, 0, 0, lam, -lam],
                  [l2, l2, -l2, -l2, 0, 0],
                  [l2, l2, 0, 0, -l2, -l2]], float)
    return _advection("advection_d3q6", vel, M, np.array([0, s1, s1, s1, s2, s2]), V, lam)


def advection_d2q4(lam: float = 1.0, V=(0.5, 0.5), s1: float = 1.4, s2: float = 1.0) -> SchemeSpec:
    return _advection("advection_d2q4", D2Q4_VELOCITIES, _d2q4_matrix(lam), np.array([0, s1, s1, s2]), V, lam)


def advection_d1q2(lam: float = 1.0, V: float = 0.5, s1: float = 1.5) -> SchemeSpec:
    M = np.array([[1.0, 1.0], [lam, -lam]])
    return _advection("advection_d1q2", np.array([[1], [-1]]), M, np.array([0.0, s1]), np.atleast_1d(V), lam)


def advection_scheme(dim: int, **kw) -> SchemeSpec:
    return {1: advection_d1q2, 2: advection_d2q4, 3: advection_d3q6}[dim](**kw)


def cell_average(grid: Grid, fn, samples: int = 4) -> np.ndarray:
    """Finest-level cell means of ``fn(*coords)`` by midpoint subsampling.

    ``fn`` receives broadcastable coordinate arrays (one per axis).
    """
    shape = grid.shape(grid.max_level)
    h = grid.dx
    t = (np.arange(samples) + 0.5) / samples
    acc = np.zeros(shape)
    axes = [np.arange(n) * h for n in shape]
    for off in np.ndindex(*(samples,) * grid.dim):
        coords = np.meshgrid(*[a + t[o] * h for a, o in zip(axes, off)], indexing="ij", sparse=True)
        acc += fn(*coords)
    return acc / samples ** grid.dim


def sphere_indicator(grid: Grid, center, radius: float, samples: int = 2) -> np.ndarray:
    c = np.asarray(center, float)

    def chi(*x):
        return (sum((xi - ci) ** 2 for xi, ci in zip(x, c)) <= radius ** 2).astype(float)
    return cell_average(grid, chi, samples)
