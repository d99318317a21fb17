"""Error, compression and aerodynamic diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import FieldSet
from .lbm import SchemeSpec, to_moments
from .mesh import CellTree
from .multiresolution import PredictionConfig, TreeData


class NoDominantPeakError(ValueError):
    pass


@dataclass
class RunMetrics:
    time: list = field(default_factory=list)
    memor: list = field(default_factory=list)
    meshor: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    cd: list = field(default_factory=list)
    cl: list = field(default_factory=list)
    strouhal: float | None = None
    slope: float | None = None


def occupation_rates(tree: CellTree) -> tuple[float, float]:
    """``(MemOR, MeshOR)``: tree cells over the full tree, leaves over finest cells."""
    g = tree.grid
    full = sum(g.size(j) for j in g.levels)
    return tree.n_tree_cells / full, tree.n_leaves / g.size(g.max_level)


def relative_l1(approx: np.ndarray, ref: np.ndarray) -> float:
    """``sum |a - r| / sum |r|``; plain absolute sum when the reference vanishes."""
    num = float(np.abs(approx - ref).sum())
    den = float(np.abs(ref).sum())
    return num if den < 1e-300 else num / den


def finest_moments(field: FieldSet, scheme: SchemeSpec,
                   cfg: PredictionConfig = PredictionConfig()) -> np.ndarray:
    """Reconstructed moments on the finest grid, shape ``(*shape, q)``."""
    return to_moments(TreeData(field, cfg).finest(), scheme)


def additional_error(field: FieldSet, reference: np.ndarray, scheme: SchemeSpec, moment: int,
                     cfg: PredictionConfig = PredictionConfig(), moments: np.ndarray | None = None) -> float:
    """Relative l1 gap between the reconstructed adaptive moment and the reference.

    ``reference`` holds finest-level populations ``(*shape, q)``. Pass
    precomputed ``moments`` to avoid reconstructing once per moment.
    """
    m = finest_moments(field, scheme, cfg) if moments is None else moments
    ref = to_moments(reference, scheme)
    return relative_l1(m[..., moment], ref[..., moment])


def obstacle_force(values: np.ndarray, alpha: np.ndarray, measures: np.ndarray,
                   scheme: SchemeSpec, dt: float) -> np.ndarray:
    """Momentum the obstacle blend removes per unit time (force on the body)."""
    mom = to_moments(values, scheme)[:, list(scheme.params["momentum"])]
    return (alpha * measures) @ mom / dt


def drag_lift(field: FieldSet, obstacle, scheme: SchemeSpec) -> tuple[float, float]:
    """``(C_D, C_L)`` from the pre-blend field; body length is the disc diameter."""
    p = scheme.params
    dt = scheme.dt(field.tree.grid)
    F = obstacle_force(field.values, obstacle.fractions(field.tree), field.measures(), scheme, dt)
    scale = 2.0 / (p["rho0"] * p["u0"] ** 2 * obstacle.diameter)
    return float(scale * F[0]), float(scale * F[1])


def strouhal(t, cl, u0: float, L: float, transient: float = 0.0,
             prominence: float = 4.0) -> tuple[float, float]:
    """Shedding Strouhal number ``L f / u0`` and its frequency resolution.

    The series after ``transient`` is linearly detrended and Hann windowed;
    the dominant nonzero bin of its amplitude spectrum must stand out from
    the mean amplitude by ``prominence``.
    """
    t = np.asarray(t, float)
    y = np.asarray(cl, float)
    keep = t >= transient
    t, y = t[keep], y[keep]
    if len(t) < 8:
        raise NoDominantPeakError("series too short")
    dt = float(np.mean(np.diff(t)))
    y = y - np.polyval(np.polyfit(t - t[0], y, 1), t - t[0])
    amp = np.abs(np.fft.rfft(y * np.hanning(len(y))))[1:]
    if amp.size == 0 or amp.max() <= 1e-12 * (1.0 + np.abs(cl).max()):
        raise NoDominantPeakError("flat series")
    k = int(np.argmax(amp))
    if amp[k] < prominence * amp.mean():
        raise NoDominantPeakError("no dominant frequency")
    df = 1.0 / (len(y) * dt)
    return L * (k + 1) * df / u0, L * df / u0


def fit_slope(eps, err) -> tuple[float, float]:
    """Least-squares slope and intercept of ``log err`` against ``log eps``."""
    s, c = np.polyfit(np.log(eps), np.log(err), 1)
    return float(s), float(np.exp(c))


def error_constant(eps, err) -> float:
    """Smallest ``C`` with ``err <= C eps`` on the samples."""
    return float(np.max(np.asarray(err) / np.asarray(eps)))


def normalized_series(cd, cl) -> tuple[np.ndarray, np.ndarray]:
    """``C_D`` over its mean and ``C_L`` over its peak magnitude."""
    cd, cl = np.asarray(cd, float), np.asarray(cl, float)
    return cd / cd.mean(), cl / np.abs(cl).max()


def twin_agreement(t, adaptive, reference, u0: float, L: float, transient: float) -> dict:
    """Compare two ``(n, 2)`` drag/lift histories after ``transient``.

    Each series is normalized on its own (see ``normalized_series``); the
    gaps are RMS differences of the normalized series.
    """
    t = np.asarray(t, float)
    keep = t >= transient
    a = normalized_series(*np.asarray(adaptive)[keep].T)
    r = normalized_series(*np.asarray(reference)[keep].T)
    st_a, res = strouhal(t, np.asarray(adaptive)[:, 1], u0, L, transient)
    st_r, _ = strouhal(t, np.asarray(reference)[:, 1], u0, L, transient)
    return {"rms_cd": float(np.sqrt(np.mean((a[0] - r[0]) ** 2))),
            "rms_cl": float(np.sqrt(np.mean((a[1] - r[1]) ** 2))),
            "st": st_a, "st_ref": st_r, "st_bin": res,
            "same_bin": bool(round(st_a / res) == round(st_r / res))}
