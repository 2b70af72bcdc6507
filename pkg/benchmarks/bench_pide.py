"""Benchmark the PIDE stepping backends: compiled kernel vs NumPy/FFT.

Usage:
    python benchmarks/bench_pide.py [--repeats 5]

Times backward induction on the production data-generation grid and on a
refined grid, for European and American styles, and reports the speedup
plus the worst value disagreement between the two backends.
"""

import argparse
import time

import numpy as np

from jdpricer import pide
from jdpricer.core import AMERICAN, CALL, EUROPEAN, PUT, MertonParams


def time_solve(params, kind, style, strike, rate, grid, repeats):
    best = float("inf")
    surface = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        surface = pide.solve(params, kind, style, strike, rate, grid)
        best = min(best, time.perf_counter() - t0)
    return best, surface


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    if pide.backend() != "compiled":
        print("compiled kernel unavailable; nothing to compare")
        return

    params = MertonParams(mu=0.179, sigma=0.143, lam=2.0, mu_y=-0.012,
                          sigma_y=0.042)
    cases = [
        ("600x300 production", pide.default_grid(params, 100.0, 0.5)),
        ("1200x600 refined",
         pide.default_grid(params, 100.0, 0.5, n_x=1200, n_t=600)),
    ]
    print(f"{'case':<28} {'style':<9} {'compiled':>10} {'numpy':>10} "
          f"{'speedup':>8} {'max |diff|':>12}")
    for label, grid in cases:
        for kind, style in ((CALL, EUROPEAN), (PUT, AMERICAN)):
            t_c, surf_c = time_solve(params, kind, style, 100.0, 0.03,
                                     grid, args.repeats)
            saved = pide._imex
            pide._imex = None
            try:
                t_n, surf_n = time_solve(params, kind, style, 100.0, 0.03,
                                         grid, args.repeats)
            finally:
                pide._imex = saved
            diff = float(np.max(np.abs(surf_c.values - surf_n.values)))
            print(f"{label:<28} {style:<9} {t_c * 1e3:>8.1f}ms "
                  f"{t_n * 1e3:>8.1f}ms {t_n / t_c:>7.1f}x {diff:>12.2e}")


if __name__ == "__main__":
    main()
