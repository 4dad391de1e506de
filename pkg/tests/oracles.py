"""Reference computations written independently of the package internals.

They reuse only the package's *inputs* (problem parameters, grid axes) and
re-derive everything else with different numerical building blocks:
scalar loops for the filter, scipy quadrature / physicists' Gauss-Hermite
nodes for expectations, scipy's grid interpolator for table lookups, and
exhaustive enumeration instead of backward induction.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import quad
from scipy.interpolate import RegularGridInterpolator

_SQRT2PI = math.sqrt(2.0 * math.pi)


# --------------------------------------------------------------------------
# filter


def scalar_kalman(A, C, W, V, M0, N):
    """Covariance-form scalar recursion; returns (M, Q, K) lists for k = 0..N."""
    M, Q, K = [M0], [], []
    for k in range(N + 1):
        if k > 0:
            M.append(A * A * Q[-1] + W)
        q = M[k] - M[k] * C * C * M[k] / (C * C * M[k] + V)
        Q.append(q)
        K.append(q * C / V)
    return M, Q, K


def riccati_fixed_point(A, C, W, V, iters=10000):
    """Steady-state prediction variance by plain fixed-point iteration."""
    M = W
    for _ in range(iters):
        M = A * A * (M * V / (C * C * M + V)) + W
    return M


def steady_state_root():
    """The scalar example's root of M^2 - 2.81 M - 3 = 0."""
    return (2.81 + math.sqrt(2.81**2 + 12.0)) / 2.0


# --------------------------------------------------------------------------
# expectations of a gridded function


class GridFunction:
    """Bilinear interpolant of a table on (e_axis, r_axis) with edge clamping."""

    def __init__(self, e_axis, r_axis, table):
        self.e_axis = np.asarray(e_axis, float)
        self.r_axis = np.asarray(r_axis, float)
        self._f = RegularGridInterpolator((self.e_axis, self.r_axis), np.asarray(table, float), method="linear")

    def __call__(self, e, r):
        e = np.clip(np.asarray(e, float), self.e_axis[0], self.e_axis[-1])
        r = np.clip(np.asarray(r, float), self.r_axis[0], self.r_axis[-1])
        e, r = np.broadcast_arrays(e, r)
        return self._f(np.stack([e.ravel(), r.ravel()], axis=-1)).reshape(e.shape)


def expect_quad(f: GridFunction, center: float, r: float, spread: float) -> float:
    """E f(center + spread Z, r), Z ~ N(0,1), by adaptive quadrature per linear piece."""
    if spread == 0.0:
        return float(f(center, r))
    knots = (f.e_axis - center) / spread
    at_knots = f(f.e_axis, np.full_like(f.e_axis, r))
    edges = [-np.inf, *knots, np.inf]
    ends = [at_knots[0], *at_knots, at_knots[-1]]
    # With r fixed the bilinear interpolant is the 1-D linear interpolant of
    # its knot values (np.interp clamps at the ends, like the table).
    g = lambda z: float(np.interp(center + spread * z, f.e_axis, at_knots)) * math.exp(-0.5 * z * z) / _SQRT2PI
    total = 0.0
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        if ends[i] == 0.0 and ends[i + 1] == 0.0:
            continue  # the interpolant vanishes on this piece
        val, _ = quad(g, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
        total += val
    return total


def expect_hermite(f: GridFunction, center: float, r: float, spread: float, d0: int) -> float:
    """Same expectation with physicists' Gauss-Hermite nodes."""
    x, w = hermgauss(d0)
    vals = f(center + math.sqrt(2.0) * spread * x, np.full_like(x, r))
    return float(np.dot(w, vals) / math.sqrt(math.pi))


# --------------------------------------------------------------------------
# brute-force two-stage DP


def branches(e, r, delta, A, lam, rho):
    lam_c, rho_c = 1.0 - lam, 1.0 - rho
    Ae, ARA = A * e, A * A * r
    if not delta:
        return [(1.0, Ae, ARA)]
    return [
        (rho_c * lam_c, 0.0, 0.0),
        (rho_c * lam, Ae, ARA),
        (rho, lam * Ae, lam * ARA + lam * lam_c * Ae * Ae),
    ]


def bruteforce_two_stage(A, lam, rho, alpha, filt, spreads, e_axis, r_axis, mode="exact", d0=3):
    """V0 on the grid for N = 2 by enumerating every stage-1 decision map.

    ``filt[k]`` is the decision-independent stage term tr(K N K') + tr Q at
    step k, ``spreads[k]`` the standard deviation of K nu at step k. The
    expectation of a table is linear in its entries, so it is evaluated once
    per unit table and reused across all 2^(d1*d2) maps.
    """
    E, R = np.meshgrid(e_axis, r_axis, indexing="ij")
    pts = list(zip(E.ravel(), R.ravel()))
    G = len(pts)

    def stage(e, r, delta, k):
        return alpha * delta + (1.0 - (1.0 - lam) * delta) * (A * A * e * e + A * A * r) + filt[k + 1]

    def expect(table, c, r, k):
        f = GridFunction(e_axis, r_axis, table.reshape(E.shape))
        if mode == "exact":
            return expect_quad(f, c, r, spreads[k])
        return expect_hermite(f, c, r, spreads[k], d0)

    # Linear functional of the stage-1 table for every (grid point, delta0).
    weights = np.zeros((2, G, G))
    for d in (0, 1):
        for i, (e, r) in enumerate(pts):
            for j in range(G):
                unit = np.zeros(G)
                unit[j] = 1.0
                weights[d, i, j] = sum(w * expect(unit, c, rn, 1) for w, c, rn in branches(e, r, d, A, lam, rho))
    cost1 = np.array([[stage(e, r, d, 1) for d in (0, 1)] for e, r in pts])  # (G, 2)
    maps = np.array(list(itertools.product((0, 1), repeat=G)))  # (2^G, G)
    J1 = cost1[np.arange(G), maps]  # stage-1 cost table of every decision map
    best = np.full(G, np.inf)
    for d in (0, 1):
        stage0 = np.array([stage(e, r, d, 0) for e, r in pts])
        best = np.minimum(best, (stage0 + J1 @ weights[d].T).min(axis=0))
    return best.reshape(E.shape)
