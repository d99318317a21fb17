"""Lax-Liu configuration 3: additional error against the uniform run over a sweep of eps.

Usage: python scripts/euler_error_sweep.py [--max-level 7] [--t-final 0.3] [--out runs/euler_sweep]
"""

import argparse
from pathlib import Path

import numpy as np

from mrlbm.config import from_dict
from mrlbm.diagnostics import fit_slope
from mrlbm.runner import run

NAMES = ("rho", "rho_u", "rho_v", "E")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-level", type=int, default=7)
    ap.add_argument("--t-final", type=float, default=0.3)
    ap.add_argument("--mu", type=int, default=0)
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-2, 5e-3, 1e-3, 5e-4])
    ap.add_argument("--config", type=int, default=3, choices=(3, 12))
    ap.add_argument("--out", default="runs/euler_sweep")
    a = ap.parse_args()
    out = Path(a.out)
    rows = []
    for eps in a.eps:
        cfg = from_dict({"problem": f"euler_cfg{a.config}", "max_level": a.max_level, "mu": a.mu,
                         "t_final": a.t_final, "eps": eps, "output": {"track_reference": True}})
        m = run(cfg, out / f"eps_{eps:g}")
        errs = [m.errors[n][-1] for n in NAMES]
        rows.append([eps, m.meshor[-1], m.memor[-1], *errs])
        print(f"eps {eps:g}: MeshOR {m.meshor[-1]:.3f} MemOR {m.memor[-1]:.3f} "
              + " ".join(f"E[{n}] {e:.3e}" for n, e in zip(NAMES, errs)), flush=True)
    rows = np.array(rows)
    np.savetxt(out / "summary.csv", rows, delimiter=",", fmt="%.17g", comments="",
               header="eps,meshor,memor," + ",".join(f"err_{n}" for n in NAMES))
    if len(rows) > 1:
        for k, n in enumerate(NAMES):
            s, c = fit_slope(rows[:, 0], rows[:, 3 + k])
            print(f"{n}: slope {s:.3f}, C {c:.3g}")


if __name__ == "__main__":
    main()
