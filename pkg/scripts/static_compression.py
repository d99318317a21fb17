"""Threshold static fields (smooth, step, sphere) and report compression and round-trip error.

Usage: python scripts/static_compression.py [--level 8] [--gamma 1]
"""

import argparse

import numpy as np

from mrlbm.mesh import Grid
from mrlbm.multiresolution import compress_array
from mrlbm.schemes import cell_average, sphere_indicator


def fields(J: int):
    g = Grid(2, 0, J)
    yield "gaussian", cell_average(g, lambda x, y: np.exp(-80 * ((x - 0.5) ** 2 + (y - 0.4) ** 2)))
    yield "quadrant step", cell_average(g, lambda x, y: ((x > 0.5) ^ (y > 0.5)).astype(float), samples=1)
    yield "disc", sphere_indicator(g, (0.5, 0.5), 0.3)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--level", type=int, default=8)
    ap.add_argument("--gamma", type=int, default=1)
    a = ap.parse_args()
    print(f"{'field':14s} {'eps':>8s} {'MeshOR':>8s} {'MemOR':>8s} {'l1':>10s} {'linf':>10s}")
    for name, u in fields(a.level):
        for eps in (1e-2, 1e-3, 1e-4):
            r = compress_array(u, eps, a.gamma)
            print(f"{name:14s} {eps:8.0e} {r.meshor:8.4f} {r.memor:8.4f} {r.l1:10.3e} {r.linf:10.3e}")


if __name__ == "__main__":
    main()
