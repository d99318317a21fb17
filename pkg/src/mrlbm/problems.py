"""Assemble grid, scheme, boundaries and initial data from a run configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import RunConfig
from .diagnostics import drag_lift, obstacle_force
from .fields import FieldSet
from .lbm import SchemeSpec, uniform_boundaries
from .mesh import CellTree, Grid
from . import schemes as S

CONSERVED_NAMES = {
    "euler_d2q4": ("rho", "rho_u", "rho_v", "E"),
    "ns_d2q9": ("rho", "q_x", "q_y"),
}


@dataclass
class Problem:
    grid: Grid
    scheme: SchemeSpec
    boundaries: tuple
    initial: FieldSet
    obstacle: S.ObstacleSpec | None = None
    coefficients: list = field(default_factory=list)
    ref_coefficients: list = field(default_factory=list)

    @property
    def conserved_names(self) -> tuple[str, ...]:
        return CONSERVED_NAMES.get(self.scheme.name, ("u",))

    def post_step(self) -> Callable | None:
        """End-of-step hook for the adaptive solver (obstacle blend)."""
        if self.obstacle is None:
            return None

        def hook(f: FieldSet) -> FieldSet:
            self.coefficients.append(drag_lift(f, self.obstacle, self.scheme))
            return S.apply_obstacle(f, self.obstacle, self.scheme)
        return hook

    def reference_post_step(self) -> Callable | None:
        if self.obstacle is None:
            return None
        full = CellTree.full(self.grid)
        alpha = self.obstacle.fractions(full)
        meas = np.full(full.n_leaves, self.grid.dx ** self.grid.dim)
        p = self.scheme.params
        rest = self.scheme.equilibrium_populations([[p["rho0"], 0.0, 0.0]])[0]
        hit = np.flatnonzero(alpha)
        scale = 2.0 / (p["rho0"] * p["u0"] ** 2 * self.obstacle.diameter)
        dt = self.scheme.dt(self.grid)

        def hook(f: np.ndarray) -> np.ndarray:
            flat = f.reshape(-1, self.scheme.q)
            F = obstacle_force(flat[hit], alpha[hit], meas[hit], self.scheme, dt)
            self.ref_coefficients.append((float(scale * F[0]), float(scale * F[1])))
            out = flat.copy()
            a = alpha[hit, None]
            out[hit] = a * rest + (1.0 - a) * flat[hit]
            return out.reshape(f.shape)
        return hook


def _custom_initial(grid: Grid, ini: dict) -> np.ndarray:
    c = np.asarray(ini["center"])
    a, b, r = ini["inside"], ini["outside"], ini["radius"]
    if ini["profile"] == "step":
        u = S.cell_average(grid, lambda *x: (x[0] <= c[0]).astype(float), samples=1)
    elif ini["profile"] == "sphere":
        u = S.sphere_indicator(grid, c, r)
    else:
        u = S.cell_average(grid, lambda *x: np.exp(-sum((xi - ci) ** 2 for xi, ci in zip(x, c)) / r ** 2))
    return b + (a - b) * u


def build_problem(cfg: RunConfig) -> Problem:
    s = cfg.scheme
    if cfg.problem.startswith("euler"):
        grid = Grid(2, cfg.min_level, cfg.max_level)
        scheme = S.euler_d2q4(cfg.lam, s["s_q"], s["s_xy"], s["gamma_gas"])
        field0 = S.lax_liu_initial(3 if cfg.problem == "euler_cfg3" else 12, grid, scheme)
        return Problem(grid, scheme, uniform_boundaries(2, "copy"), field0)
    if cfg.problem == "ns_cylinder":
        grid = Grid(2, cfg.min_level, cfg.max_level, base=(2, 1))
        ob = S.ObstacleSpec(tuple(cfg.obstacle["center"]), cfg.obstacle["radius"], cfg.obstacle["samples"])
        scheme = S.ns_d2q9(cfg.lam, s["Re"], s["rho0"], s["u0"], ob.diameter, grid.dx, s["s1"])
        shape = grid.shape(grid.max_level)
        cons = np.broadcast_to([s["rho0"], s["rho0"] * s["u0"], 0.0], (*shape, 3))
        field0 = S.equilibrium_field(grid, scheme, np.ascontiguousarray(cons))
        field0 = S.apply_obstacle(field0, ob, scheme)
        return Problem(grid, scheme, S.ns_boundaries(scheme), field0, ob)
    if cfg.problem == "advection3d":
        grid = Grid(3, cfg.min_level, cfg.max_level)
        scheme = S.advection_d3q6(cfg.lam, s["V"], s["s1"], s["s2"])
        u = S.sphere_indicator(grid, cfg.initial["center"], cfg.initial["radius"],
                               samples=1 if cfg.max_level >= 8 else 2)
        return Problem(grid, scheme, uniform_boundaries(3, "copy"), S.equilibrium_field(grid, scheme, u[..., None]))
    d = s["dim"]
    grid = Grid(d, cfg.min_level, cfg.max_level)
    kw = {"lam": cfg.lam, "V": s["V"] if d > 1 else s["V"][0], "s1": s["s1"]}
    if d > 1:
        kw["s2"] = s["s2"]
    scheme = S.advection_scheme(d, **kw)
    u = _custom_initial(grid, cfg.initial)
    return Problem(grid, scheme, uniform_boundaries(d, s["boundary"]),
                   S.equilibrium_field(grid, scheme, u[..., None]))
