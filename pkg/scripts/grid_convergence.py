"""Grid refinement study for the synthesized value function.

Usage: python3 scripts/grid_convergence.py [--lam 0.1] [--rho 0.3] [--alpha 1.0]

Synthesizes the scalar benchmark on successively finer (d1, d2, d0) grids
and reports V_0(0, 0), the change from the previous level and the fraction
of successor queries that had to be clamped to the grid box.
"""
from __future__ import annotations

import argparse
import time

from remest.encoder import precompute_gains
from remest.model import scalar_example
from remest.policy import PolicyGrid, clamp_statistics, default_grid, dp_synthesize

LEVELS = [(51, 25, 7), (101, 51, 11), (201, 101, 15), (401, 201, 21)]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lam", type=float, default=0.1)
    ap.add_argument("--rho", type=float, default=0.3)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--quadrature", default="exact", choices=["exact", "gauss-hermite"])
    args = ap.parse_args()

    problem = scalar_example(lam=args.lam, rho=args.rho, alpha=args.alpha)
    gains = precompute_gains(problem)
    box = default_grid(problem, gains=gains)
    prev = None
    print(f"box e_max={box.e_max:.4g} r_max={box.r_max:.4g} quadrature={args.quadrature}")
    for d1, d2, d0 in LEVELS:
        grid = PolicyGrid(box.e_max, box.r_max, d1, d2, d0, args.quadrature)
        t0 = time.perf_counter()
        table = dp_synthesize(problem, grid, gains)
        wall = time.perf_counter() - t0
        v, _ = table.value_at(0, 0.0, 0.0)
        v = float(v)
        change = "" if prev is None else f"  change {abs(v - prev) / abs(v):.2e}"
        frac = clamp_statistics(problem, grid, gains)["fraction"]
        print(f"d1={d1:4d} d2={d2:4d} d0={d0:3d}  V0(0,0)={v:.8f}{change}  clamped {frac:.3%}  {wall:.1f} s")
        prev = v


if __name__ == "__main__":
    main()
