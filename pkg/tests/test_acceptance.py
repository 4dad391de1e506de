"""Acceptance criteria 1-10 on the scalar benchmark problem.

Each test records one PASS/FAIL line (printed in the pytest terminal summary,
or directly when this file is run as a script) and then asserts. Tolerances
are the acceptance tolerances; none are loosened here.
"""
from __future__ import annotations

import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import bruteforce_two_stage, scalar_kalman, steady_state_root  # noqa: E402
from remest import harness  # noqa: E402
from remest.cli import main as cli_main  # noqa: E402
from remest.encoder import precompute_gains  # noqa: E402
from remest.harness import (  # noqa: E402
    AlwaysPolicy,
    OneSidedPolicy,
    ThresholdPolicy,
    dominance_summary,
    matched_baselines,
    monte_carlo,
    psi_consistency,
    residual_diagnostic,
)
from remest.model import scalar_example  # noqa: E402
from remest.policy import PolicyGrid, default_grid, dp_synthesize  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
SWEEP_CONFIG = ROOT / "configs" / "sweep.json"
CHANNELS = [(lam, rho) for lam in (0.1, 0.3) for rho in (0.0, 0.3, 0.7, 1.0)]

RESULTS: list[str] = []


def record(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)


def _threshold(problem, gains=None, grid=None):
    gains = gains or precompute_gains(problem)
    table = dp_synthesize(problem, grid or default_grid(problem, gains=gains), gains)
    return ThresholdPolicy.for_problem(table, problem), table


def test_criterion_01_kalman_exactness():
    p = scalar_example()
    precompute_gains(p)  # warm-up
    t0 = time.perf_counter()
    g = precompute_gains(p)
    elapsed = time.perf_counter() - t0
    cov = precompute_gains(p, "covariance")
    q0_err = abs(g.Q[0, 0, 0] - 0.5)
    q1_err = abs(g.Q[1, 0, 0] - 3.405 / 4.405)
    form_err = float(np.max(np.abs(g.Q - cov.Q) / np.abs(cov.Q)))
    _, Q_ref, _ = scalar_kalman(0.9, 1.0, 3.0, 1.0, 1.0, 100)
    oracle_err = float(np.max(np.abs(g.Q[:, 0, 0] - Q_ref) / np.abs(Q_ref)))
    ok = q0_err < 1e-12 and q1_err < 1e-12 and form_err < 1e-10 and oracle_err < 1e-10 and elapsed < 1e-3
    record(1, ok, f"|Q0-0.5|={q0_err:.1e} |Q1-3.405/4.405|={q1_err:.1e} form gap={form_err:.1e} "
                  f"oracle gap={oracle_err:.1e} time={elapsed * 1e3:.3f} ms")
    assert ok


def test_criterion_02_riccati_limit():
    p = scalar_example(lam=0.0, rho=0.0, alpha=1.0)
    g = precompute_gains(p)
    t0 = time.perf_counter()
    s = monte_carlo(p, g, AlwaysPolicy(), seed=101, episodes=100000)
    elapsed = time.perf_counter() - t0
    per_step = s.step_ehat_sq / s.episodes
    mse = float(per_step[50:].mean())
    target = steady_state_root()
    rel = abs(mse - target) / target
    ok = rel < 0.02 and abs(target - 3.6353) < 1e-4 and elapsed < 30
    record(2, ok, f"mean MSE k=50..100 = {mse:.4f} vs {target:.4f} ({rel * 100:.2f}%), {elapsed:.1f} s")
    assert ok


def test_criterion_03_dp_oracle():
    worst, slowest = 0.0, 0.0
    for mode in ("exact", "gauss-hermite"):
        for lam, rho, alpha in ((0.2, 0.4, 1.0), (0.1, 0.0, 0.5), (0.3, 1.0, 2.0)):
            p = scalar_example(N=2, lam=lam, rho=rho, alpha=alpha)
            g = precompute_gains(p)
            grid = PolicyGrid(3.0, 2.0, 5, 3, 3, mode)
            t0 = time.perf_counter()
            table = dp_synthesize(p, grid, g)
            slowest = max(slowest, time.perf_counter() - t0)
            filt = [float(g.innovation_gain_cov(k)[0, 0] + g.Q[k, 0, 0]) for k in range(3)]
            spreads = [math.sqrt(float(g.innovation_gain_cov(k)[0, 0])) for k in range(3)]
            ref = bruteforce_two_stage(0.9, lam, rho, alpha, filt, spreads, grid.e_axis, grid.r_axis, mode, 3)
            worst = max(worst, float(np.max(np.abs(table.V[0] - ref) / np.maximum(1.0, np.abs(ref)))))
    ok = worst < 1e-12 and slowest < 1.0
    record(3, ok, f"max |V0 - enumeration| = {worst:.1e} (both quadratures), synthesis {slowest * 1e3:.1f} ms")
    assert ok


def test_criterion_04_last_stage_closed_form():
    worst = 0.0
    for lam, rho in CHANNELS:
        p = scalar_example(lam=lam, rho=rho)
        _, table = _threshold(p)
        E, R = table.grid.mesh()
        closed = (1 - lam) * (0.81 * E**2 + 0.81 * R)
        worst = max(worst, float(np.max(np.abs(table.chi[-1] - closed))))
    ok = worst < 1e-12
    record(4, ok, f"max |chi[N-1] - closed form| = {worst:.1e} over 8 channels")
    assert ok


def test_criterion_05_symmetry():
    worst = 0.0
    for lam, rho in CHANNELS:
        for alpha in (0.5, 1.0, 2.0):
            _, table = _threshold(scalar_example(lam=lam, rho=rho, alpha=alpha))
            worst = max(worst, float(np.max(np.abs(table.V - table.V[:, ::-1]))),
                        float(np.max(np.abs(table.chi - table.chi[:, ::-1]))))
    ok = worst == 0.0
    record(5, ok, f"max |V(e,R) - V(-e,R)| = {worst!r} over 24 tables")
    assert ok


def test_criterion_06_psi_identity():
    rows = []
    for i, (lam, rho) in enumerate(CHANNELS):
        p = scalar_example(lam=lam, rho=rho, alpha=1.0)
        g = precompute_gains(p)
        pol, _ = _threshold(p, g)
        rep = psi_consistency(monte_carlo(p, g, pol, seed=600 + i, episodes=10000), g)
        rows.append((lam, rho, rep.z_combined, rep.z))
    worst = max(abs(r[2]) for r in rows)
    ok = worst < 3.0
    detail = ", ".join(f"({lam:g},{rho:g}) {zc:+.2f}" for lam, rho, zc, _ in rows)
    record(6, ok, f"max |gap|/combined SE = {worst:.2f}; paired max {max(abs(r[3]) for r in rows):.2f}; {detail}")
    assert ok


def test_criterion_07_residual_diagnostic():
    p = scalar_example(lam=0.1, rho=0.3, alpha=1.0)
    g = precompute_gains(p)
    pol, _ = _threshold(p, g)
    good = residual_diagnostic(monte_carlo(p, g, pol, seed=700, episodes=100000))
    bad = residual_diagnostic(monte_carlo(p, g, OneSidedPolicy(1.0), seed=700, episodes=100000))
    ok = (not good.flagged) and bad.flagged
    record(7, ok, f"threshold max|z| = {good.max_abs_z:.2f} over {good.buckets_tested} buckets "
                  f"({good.buckets_skipped} sparse skipped); one-sided control max|z| = {bad.max_abs_z:.1f}")
    assert ok


def test_criterion_08_dominance():
    t0 = time.perf_counter()
    lines, ok = [], True
    for alpha in (0.5, 1.0, 2.0):
        p = scalar_example(lam=0.1, rho=0.3, alpha=alpha)
        g = precompute_gains(p)
        pol, _ = _threshold(p, g)
        ref = monte_carlo(p, g, pol, seed=800, episodes=100000, buckets=False)
        phi_ref = ref.comm + ref.ehat_sq
        rate = float(ref.packets.mean() / (p.N + 1))
        zs = {}
        for name, base in matched_baselines(p, rate).items():
            other = monte_carlo(p, g, base, seed=800, episodes=100000, buckets=False)
            diff = (other.comm + other.ehat_sq) - phi_ref  # common noise: paired differences
            zs[name] = float(diff.mean() / (diff.std(ddof=1) / math.sqrt(len(diff))))
        ok &= all(z > 3.0 for z in zs.values())
        lines.append(f"a={alpha:g} rate={rate:.3f} " + " ".join(f"{k}:{v:.0f}" for k, v in zs.items()))
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    record(8, ok, f"paired z (baseline - threshold) per baseline; {'; '.join(lines)}; {elapsed:.0f} s")
    assert ok


def test_criterion_09_backward_error_ordering(tmp_path):
    cfg = json.loads(SWEEP_CONFIG.read_text())
    out = tmp_path / "sweep.csv"
    t0 = time.perf_counter()
    code = cli_main(["sweep", "--config", str(SWEEP_CONFIG), "--out", str(out)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    points = harness.read_csv(out)
    comps = dominance_summary(points)
    report = json.loads((tmp_path / "sweep.dominance.json").read_text())
    failures = [c for c in comps if not c.holds]
    worst = max(comps, key=lambda c: c.z_max)
    ok = (len(points) == 96 and len(cfg["cost"]["alpha"]) >= 10 and not failures
          and report["all_hold"] and elapsed < 3600)
    record(9, ok, f"{len(points)} points, {len(comps)} rho-pairs, {len(failures)} significant violations "
                  f"(worst z={worst.z_max:.2f} at lambda={worst.better[0]:g}, rho {worst.better[1]:g} vs "
                  f"{worst.worse[1]:g}); {elapsed / 60:.1f} min")
    assert ok


def test_criterion_10_reproducibility(tmp_path):
    cfg = json.loads(SWEEP_CONFIG.read_text())
    cfg["problem"]["N"] = 30
    cfg["channel"] = {"lambda": [0.1, 0.3], "rho": [0.0, 1.0]}
    cfg["cost"]["alpha"] = [0.5, 2.0, 8.0]
    cfg["grid"] = {"d1": 81, "d2": 41, "d0": 9}
    cfg["run"] = {"episodes": 3000, "seed": 77}
    single = json.loads(json.dumps(cfg))
    single["channel"] = {"lambda": 0.1, "rho": 0.3}
    single["cost"]["alpha"] = 1.0
    (tmp_path / "sweep.json").write_text(json.dumps(cfg))
    (tmp_path / "single.json").write_text(json.dumps(single))
    files = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        codes = [
            cli_main(["synthesize", "--config", str(tmp_path / "single.json"), "--out", str(d / "p.pol")]),
            cli_main(["simulate", "--config", str(tmp_path / "single.json"), "--policy", str(d / "p.pol"),
                      "--out", str(d / "sim.csv")]),
            cli_main(["simulate", "--config", str(tmp_path / "single.json"), "--out", str(d / "base.csv")]),
            cli_main(["sweep", "--config", str(tmp_path / "sweep.json"), "--out", str(d / "sweep.csv"), "--threads", "1"]),
        ]
        assert codes == [0, 0, 0, 0]
        files.append(sorted(p.name for p in d.iterdir()))
    names = files[0]
    same = [n for n in names if (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()]
    ok = files[0] == files[1] and len(same) == len(names)
    record(10, ok, f"{len(same)}/{len(names)} output files byte-identical across two runs ({', '.join(names)})")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
