"""Command line: ``mrlbm run|compress|verify``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
``MRLBM_OUTPUT_DIR`` overrides the output directory when ``--output`` is absent.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config
from .multiresolution import compress_array
from .runner import NumericalFailure, run
from .verify import run_all

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrlbm", description="Adaptive multiresolution lattice-Boltzmann runs")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a configured problem")
    r.add_argument("--config", required=True)
    r.add_argument("--output")
    r.add_argument("--max-steps", type=int)
    c = sub.add_parser("compress", help="threshold a uniform field and report the round trip")
    c.add_argument("--input", required=True, help=".npy or whitespace-separated text array")
    c.add_argument("--eps", type=float, required=True)
    c.add_argument("--gamma", type=int, default=1, choices=(1, 2, 3))
    c.add_argument("--min-level", type=int, default=2)
    sub.add_parser("verify", help="run the quick invariant suite")
    return p


def _load_array(path: str) -> np.ndarray:
    p = Path(path)
    return np.load(p) if p.suffix == ".npy" else np.loadtxt(p, ndmin=1)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.cmd == "verify":
        return EXIT_OK if run_all() else EXIT_NUMERIC
    if args.cmd == "compress":
        try:
            u = _load_array(args.input)
            rep = compress_array(u, args.eps, args.gamma, args.min_level)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"meshor {rep.meshor:.6g}")
        print(f"memor {rep.memor:.6g}")
        print(f"leaves {rep.n_leaves}")
        print(f"l1 {rep.l1:.6g}")
        print(f"linf {rep.linf:.6g}")
        return EXIT_OK
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.output or os.environ.get("MRLBM_OUTPUT_DIR") or cfg.output.dir
    try:
        m = run(cfg, out, args.max_steps)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"steps {len(m.time) - 1}  final MeshOR {m.meshor[-1]:.4f}  MemOR {m.memor[-1]:.4f}")
    if m.strouhal is not None:
        print(f"Strouhal {m.strouhal:.4f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
