"""Run the tradeoff sweep and summarise it per channel.

Usage: python3 scripts/reproduce_sweep.py [--config configs/sweep.json] [--out results/sweep.csv]
                                         [--plot results/sweep.png]

Writes the sweep CSV and dominance JSON through the ``remest sweep`` command,
then prints each (lambda, rho) curve as packet rate vs. MSE. ``--plot`` draws
the curves if matplotlib is installed (it is not a package dependency).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from remest import harness
from remest.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/sweep.json")
    ap.add_argument("--out", default="results/sweep.csv")
    ap.add_argument("--plot", default=None, help="optional PNG path for the tradeoff figure")
    ap.add_argument("--reuse", action="store_true", help="summarise an existing CSV instead of rerunning")
    args = ap.parse_args()

    out = Path(args.out)
    if not (args.reuse and out.exists()):
        out.parent.mkdir(parents=True, exist_ok=True)
        code = cli_main(["sweep", "--config", args.config, "--out", str(out)])
        if code:
            return code
    points = harness.read_csv(out)
    curves = harness.group_curves(points)
    for (lam, rho), pts in sorted(curves.items()):
        print(f"lambda={lam:g} rho={rho:g}")
        for p in sorted(pts, key=lambda p: p.packet_rate):
            print(f"  alpha={p.alpha:<6g} rate={p.packet_rate:.4f}  mse={p.mse:.4f} ± {p.mse_se:.4f}")
    ok = True
    for c in harness.dominance_summary(points):
        ok &= c.holds
        print(f"{'PASS' if c.holds else 'FAIL'} lambda={c.better[0]:g}: rho={c.better[1]:g} below "
              f"rho={c.worse[1]:g} (max z {c.z_max:.2f})")

    if args.plot:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("matplotlib not available; skipping the figure", file=sys.stderr)
        else:
            lams = sorted({lam for lam, _ in curves})
            fig, axes = plt.subplots(1, len(lams), figsize=(5 * len(lams), 4), squeeze=False)
            for ax, lam in zip(axes[0], lams):
                for (l, rho), pts in sorted(curves.items()):
                    if l != lam:
                        continue
                    pts = sorted(pts, key=lambda p: p.packet_rate)
                    ax.errorbar([p.packet_rate for p in pts], [p.mse for p in pts],
                                yerr=[p.mse_se for p in pts], marker="o", ms=3, label=f"rho={rho:g}")
                ax.set_title(f"lambda={lam:g}")
                ax.set_xlabel("packet rate")
                ax.set_ylabel("mean squared error per step")
                ax.legend()
            fig.tight_layout()
            fig.savefig(args.plot, dpi=120)
            print(f"figure written to {args.plot}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
