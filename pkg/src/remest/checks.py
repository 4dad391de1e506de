"""Fast self-checks on a tiny scalar problem (used by ``remest check``)."""
from __future__ import annotations

import os
import tempfile

import numpy as np

from . import harness
from .encoder import precompute_gains
from .model import RngConfig, scalar_example
from .policy import PolicyGrid, dp_synthesize, load_policy, save_policy
from .source import draw_noise


def _kalman_forms():
    p = scalar_example(N=20)
    a, b = precompute_gains(p, "information"), precompute_gains(p, "covariance")
    err = float(np.max(np.abs(a.Q - b.Q) / np.abs(b.Q)))
    q0 = float(a.Q[0, 0, 0])
    return err < 1e-10 and abs(q0 - 0.5) < 1e-12, f"Q0={q0:.15g}, max rel form gap {err:.2e}"


def _last_stage(table, problem, gains):
    A = float(gains.A[-2][0, 0])
    E, R = table.grid.mesh()
    closed = problem.channel.lam_c * (A * A * E * E + A * A * R)
    err = float(np.max(np.abs(table.chi[-1] - closed)))
    return err < 1e-12, f"max |chi[N-1] - closed form| = {err:.2e}"


def _symmetry(table):
    gap = float(np.max(np.abs(table.V - table.V[:, ::-1, :])))
    return gap == 0.0, f"max |V(e) - V(-e)| = {gap:.1e}"


def _reference_agreement(problem, gains, policy):
    noise = draw_noise(problem, seed=7, episodes=3)
    batch = harness.simulate(problem, gains, policy, noise)
    same = True
    for i in range(3):
        ref = harness.run_episode(problem, gains, policy, RngConfig(7, i))
        same &= np.array_equal(ref.delta, batch.delta[i : i + 1])
        same &= np.array_equal(ref.ehat, batch.ehat[i : i + 1])
    return bool(same), "vectorized and step-by-step episodes agree bitwise" if same else "episodes differ"


def _psi(problem, gains, policy):
    s = harness.monte_carlo(problem, gains, policy, seed=11, episodes=4000)
    rep = harness.psi_consistency(s, gains)
    return abs(rep.z_combined) < 3.0, f"gap {rep.gap:.4g}, z {rep.z_combined:.2f} (combined SE)"


def _roundtrip(table, problem):
    fd, path = tempfile.mkstemp(suffix=".pol")
    os.close(fd)
    try:
        save_policy(table, path)
        first = open(path, "rb").read()
        back = load_policy(path, problem)
        save_policy(back, path)
        same = first == open(path, "rb").read() and np.array_equal(back.V, table.V)
    finally:
        os.unlink(path)
    return same, "policy file round-trips byte for byte" if same else "policy file changed on round-trip"


def run_checks() -> list[tuple[str, bool, str]]:
    problem = scalar_example(N=12, lam=0.2, rho=0.4, alpha=1.0)
    gains = precompute_gains(problem)
    M = float(gains.M.max())
    table = dp_synthesize(problem, PolicyGrid(5 * M**0.5, 2 * M, 41, 21, 7), gains)
    policy = harness.ThresholdPolicy.for_problem(table, problem)
    results = []
    for name, fn in (
        ("kalman", _kalman_forms),
        ("last-stage", lambda: _last_stage(table, problem, gains)),
        ("symmetry", lambda: _symmetry(table)),
        ("chi-nonnegative", lambda: (bool(table.chi.min() >= 0.0), f"min chi = {table.chi.min():.3g}")),
        ("reference-episode", lambda: _reference_agreement(problem, gains, policy)),
        ("psi-identity", lambda: _psi(problem, gains, policy)),
        ("policy-roundtrip", lambda: _roundtrip(table, problem)),
    ):
        ok, detail = fn()
        results.append((name, bool(ok), detail))
    return results
