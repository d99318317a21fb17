"""The overall time loop: build, step, record, snapshot."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .config import RunConfig, dump_config
from .diagnostics import NoDominantPeakError, RunMetrics, occupation_rates, relative_l1, strouhal
from .lbm import to_moments
from .io import MetricsWriter, write_snapshot
from .multiresolution import PredictionConfig, TreeData
from .problems import Problem, build_problem
from .solver import AdaptiveSolver, ReferenceSolver

log = logging.getLogger(__name__)


class NumericalFailure(ArithmeticError):
    def __init__(self, message: str, step: int, cell=None):
        super().__init__(message)
        self.step, self.cell = step, cell


def _check_finite(solver: AdaptiveSolver, step: int):
    bad = ~np.isfinite(solver.field.values).all(1)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        cell = solver.field.cell_of_row(row)
        raise NumericalFailure(f"non-finite population at step {step}, cell {cell}", step, cell)


def make_solvers(cfg: RunConfig, problem: Problem | None = None, reference: bool = False):
    pb = problem or build_problem(cfg)
    pcfg = PredictionConfig(cfg.gamma, cfg.pair_sign)
    ad = AdaptiveSolver(pb.initial, pb.scheme, pb.boundaries, cfg.eps, cfg.mu, pcfg,
                        post_step=pb.post_step(), ghost_eval=cfg.ghost_eval)
    ref = None
    if reference:
        f0 = TreeData(pb.initial, pcfg).finest()
        ref = ReferenceSolver(f0, pb.scheme, pb.boundaries, ad.dt, post_step=pb.reference_post_step())
    return pb, ad, ref


def run(cfg: RunConfig, out_dir=None, max_steps: int | None = None) -> RunMetrics:
    """Run ``cfg``; writes resolved config, metrics CSV and snapshots to ``out_dir``."""
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.toml").write_text(dump_config(cfg))
    n_steps = cfg.n_steps if max_steps is None else min(cfg.n_steps, max_steps)
    track = cfg.output.track_reference
    pb, solver, ref = make_solvers(cfg, reference=track)
    names = pb.conserved_names
    cons = list(pb.scheme.conserved)
    pcfg = solver.cfg

    cols = ["step", "time", "n_leaves", "memor", "meshor"] + [f"total_{n}" for n in names]
    if track:
        cols += [f"err_{n}" for n in names]
    if pb.obstacle is not None:
        cols += ["cd", "cl"] + (["cd_ref", "cl_ref"] if track else [])
    metrics = RunMetrics()
    every = cfg.output.snapshot_every
    log.info("running %s for %d steps into %s", cfg.problem, n_steps, out)

    with MetricsWriter(out / "metrics.csv", cols) as mw:
        def record(step):
            f = solver.field
            memor, meshor = occupation_rates(f.tree)
            tot = f.totals() @ pb.scheme.M.T
            row = {"step": step, "time": float(solver.time), "n_leaves": f.tree.n_leaves,
                   "memor": float(memor), "meshor": float(meshor)}
            row.update({f"total_{n}": float(tot[c]) for n, c in zip(names, cons)})
            metrics.time.append(solver.time)
            metrics.memor.append(memor)
            metrics.meshor.append(meshor)
            if track:
                m = to_moments(TreeData(f, pcfg).finest(), pb.scheme)
                r = to_moments(ref.f, pb.scheme)
                for n, c in zip(names, cons):
                    e = relative_l1(m[..., c], r[..., c])
                    row[f"err_{n}"] = e
                    metrics.errors.setdefault(n, []).append(e)
            if pb.obstacle is not None and pb.coefficients:
                cd, cl = pb.coefficients[-1]
                row.update(cd=cd, cl=cl)
                metrics.cd.append(cd)
                metrics.cl.append(cl)
                if track and pb.ref_coefficients:
                    row.update(cd_ref=pb.ref_coefficients[-1][0], cl_ref=pb.ref_coefficients[-1][1])
            mw.write(**row)

        record(0)
        if every:
            write_snapshot(solver.field, pb.scheme, 0, out, names, cfg.output.dump_finest, pcfg)
        for step in range(1, n_steps + 1):
            try:
                solver.step()
                if ref is not None:
                    ref.step()
            except (ArithmeticError, np.linalg.LinAlgError) as exc:
                cell = getattr(exc, "cell", None)
                raise NumericalFailure(f"step {step}: {exc}", step, cell) from exc
            _check_finite(solver, step)
            record(step)
            if every and step % every == 0:
                write_snapshot(solver.field, pb.scheme, step, out, names, cfg.output.dump_finest, pcfg)

    if pb.obstacle is not None and len(metrics.cl) > 16:
        p = pb.scheme.params
        try:
            metrics.strouhal = strouhal(metrics.time[1:], metrics.cl, p["u0"], p["L"],
                                        transient=0.5 * metrics.time[-1])[0]
        except NoDominantPeakError:
            metrics.strouhal = None
    return metrics


def twin_coefficients(cfg: RunConfig, n_steps: int | None = None, progress=None):
    """Drag and lift histories of the adaptive run and its uniform twin.

    Returns ``(t, adaptive (n, 2), reference (n, 2), meshor (n,))``.
    """
    pb, ad, ref = make_solvers(cfg, reference=True)
    if pb.obstacle is None:
        raise ValueError("twin coefficients need an obstacle problem")
    n = cfg.n_steps if n_steps is None else n_steps
    meshor = []
    for i in range(n):
        ad.step()
        ref.step()
        meshor.append(occupation_rates(ad.tree)[1])
        if progress is not None and (i + 1) % 500 == 0:
            progress(i + 1, ad)
    t = ad.dt * np.arange(1, n + 1)
    return t, np.array(pb.coefficients), np.array(pb.ref_coefficients), np.array(meshor)
