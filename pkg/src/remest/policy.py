"""Backward dynamic programming for the symmetric threshold scheduling policy.

The encoder's sufficient statistic is the pair (ebreve, R): conditional mean
and covariance of the encoder/decoder mismatch. For a scalar source both are
scalars, and the value function V_k and the threshold statistic chi_k are
tabulated on a rectangular grid symmetric in ebreve and nonnegative in R.

Expectations over the next innovation integrate the piecewise-linear
interpolant exactly against the Gaussian density ("exact", the default), or
use Gauss-Hermite nodes ("gauss-hermite"). Either way terms are summed in
mirrored pairs so that evaluating at -ebreve performs exactly the same
floating-point operations as at +ebreve. Together with an interpolant that
reads the mirrored table column for negative arguments, this keeps computed
tables bitwise symmetric whenever the recursion itself is symmetric.
"""
from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .encoder import FilterGains, precompute_gains
from .model import ChannelParams, Problem, ProblemError

MAGIC = b"REMESTPT"
QUADRATURES = ("exact", "gauss-hermite")
FORMAT_VERSION = 1


class PolicyFileError(IOError):
    pass


@dataclass(frozen=True)
class PolicyGrid:
    """Grid over (ebreve, R) plus the number of quadrature nodes ``d0``."""

    e_max: float
    r_max: float
    d1: int = 201
    d2: int = 101
    d0: int = 15
    quadrature: str = "exact"

    def __post_init__(self):
        if self.quadrature not in QUADRATURES:
            raise ValueError(f"quadrature must be one of {QUADRATURES}, got {self.quadrature!r}")
        if not (self.e_max > 0 and self.r_max > 0 and math.isfinite(self.e_max) and math.isfinite(self.r_max)):
            raise ValueError(f"grid bounds must be positive and finite, got e_max={self.e_max}, r_max={self.r_max}")
        if self.d1 < 3 or self.d1 % 2 == 0:
            raise ValueError(f"d1 must be odd and >= 3, got {self.d1}")
        if self.d2 < 3 or self.d2 % 2 == 0:
            raise ValueError(f"d2 must be odd and >= 3, got {self.d2}")
        if self.d0 < 1:
            raise ValueError(f"d0 must be >= 1, got {self.d0}")

    @property
    def half(self) -> int:
        return (self.d1 - 1) // 2

    @property
    def e_axis(self) -> np.ndarray:
        pos = self.e_max * np.arange(self.half + 1) / self.half
        return np.concatenate([-pos[:0:-1], pos])

    @property
    def r_axis(self) -> np.ndarray:
        return self.r_max * np.arange(self.d2) / (self.d2 - 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.e_axis, self.r_axis, indexing="ij")

    def refined(self) -> "PolicyGrid":
        return PolicyGrid(self.e_max, self.r_max, 2 * self.d1 - 1, 2 * self.d2 - 1, 2 * self.d0, self.quadrature)


def default_grid(
    problem: Problem,
    d1: int = 201,
    d2: int = 101,
    d0: int = 15,
    quadrature: str = "exact",
    gains: FilterGains | None = None,
) -> PolicyGrid:
    """e_max = 5 sqrt(M), r_max = 2 M with M the largest prediction variance."""
    gains = gains or precompute_gains(problem)
    M = float(np.max(gains.M[:, 0, 0]))
    return PolicyGrid(5.0 * math.sqrt(M), 2.0 * M, d1, d2, d0, quadrature)


@lru_cache(maxsize=32)
def quadrature(d0: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Positive standard-normal nodes, their weights, and the weight of node 0.

    E[f(Z)] ~= sum_i w_i (f(p_i) + f(-p_i)) + w0 f(0). Nodes and weights are
    symmetrized so the rule is exactly even.
    """
    z, w = np.polynomial.hermite_e.hermegauss(d0)
    z = 0.5 * (z - z[::-1])
    w = 0.5 * (w + w[::-1])
    w = w / w.sum()
    h = d0 // 2
    pos, wpos = z[d0 - h:], w[d0 - h:]
    w0 = float(w[h]) if d0 % 2 else 0.0
    return pos, wpos, w0


def interpolate(layer: np.ndarray, grid: PolicyGrid, e, r) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear interpolation with clamping; returns (values, clamped mask).

    Negative ebreve reads the mirrored columns at the mirrored location, so on
    a bitwise symmetric layer the result is bitwise even in ebreve.
    """
    e = np.asarray(e, dtype=float)
    r = np.asarray(r, dtype=float)
    half = grid.half
    a = np.abs(e)
    clamped = (a > grid.e_max) | (r > grid.r_max) | (r < 0)
    u = np.minimum(a, grid.e_max) * (half / grid.e_max)
    j = np.clip(np.floor(u).astype(np.intp), 0, half - 1)
    t = u - j
    side = np.where(e < 0, -1, 1)
    c0 = half + side * j
    c1 = c0 + side
    v = np.clip(r, 0.0, grid.r_max) * ((grid.d2 - 1) / grid.r_max)
    i = np.clip(np.floor(v).astype(np.intp), 0, grid.d2 - 2)
    s = v - i
    flat = layer.reshape(-1)
    d2 = grid.d2
    f00 = flat[c0 * d2 + i]
    f01 = flat[c0 * d2 + i + 1]
    f10 = flat[c1 * d2 + i]
    f11 = flat[c1 * d2 + i + 1]
    lo = f00 + s * (f01 - f00)
    hi = f10 + s * (f11 - f10)
    return lo + t * (hi - lo), clamped


def _expect_gh(layer: np.ndarray, grid: PolicyGrid, center, r_next, spread: float) -> np.ndarray:
    """E[layer(center + spread*Z, r_next)] for Z ~ N(0, 1), Gauss-Hermite rule."""
    pos, wpos, w0 = quadrature(grid.d0)
    center = np.asarray(center, dtype=float)
    r_next = np.asarray(r_next, dtype=float)
    shape = np.broadcast(center, r_next).shape
    c = np.broadcast_to(center, shape)[None]
    rr = np.broadcast_to(r_next, shape)[None]
    offs = (spread * pos).reshape((-1,) + (1,) * len(shape))
    plus, _ = interpolate(layer, grid, c + offs, rr)
    minus, _ = interpolate(layer, grid, c - offs, rr)
    wp = wpos.reshape(offs.shape)
    total = np.sum(wp * (plus + minus), axis=0)
    if w0:
        mid, _ = interpolate(layer, grid, center, r_next)
        total = total + w0 * mid
    return total


def hat_weights(centers, axis: np.ndarray, spread: float) -> np.ndarray:
    """E[h_j(c + spread*Z)] for every hat basis function h_j on ``axis``.

    The end hats stay at 1 beyond the axis, matching the clamped interpolant,
    so each row sums to one. Weights for negative centers are the mirrored
    weights of |c|; ``axis`` must be symmetric.
    """
    c = np.abs(np.asarray(centers, dtype=float))[..., None]
    flip = np.asarray(centers) < 0
    h = axis[1] - axis[0]
    if spread <= 0.0:
        x = np.clip(c, axis[0], axis[-1])
        w = np.clip(1.0 - np.abs(x - axis) / h, 0.0, None)
    else:
        with np.errstate(over="ignore"):  # a tiny spread sends a to +-inf, which ndtr/exp handle
            a = (axis - c) / spread
            cdf = ndtr(a)
            pdf = np.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
        mass = cdf[..., 1:] - cdf[..., :-1]
        up = ((c - axis[:-1]) * mass + spread * (pdf[..., :-1] - pdf[..., 1:])) / h
        w = np.zeros(c.shape[:-1] + (len(axis),))
        w[..., 1:] += up
        w[..., :-1] += mass - up
        w[..., 0] += cdf[..., 0]
        w[..., -1] += 1.0 - cdf[..., -1]
    return np.where(flip[..., None], w[..., ::-1], w)


def _expect_exact(layer: np.ndarray, grid: PolicyGrid, center, r_next, spread: float) -> np.ndarray:
    """Exact E[interpolant(center + spread*Z, r_next)] for Z ~ N(0, 1).

    The interpolant is piecewise linear in ebreve and r_next does not depend
    on Z, so the expectation is a weighted sum of column values with
    Gaussian hat masses as weights. Mirrored nodes are accumulated in pairs
    to keep the result bitwise even in ``center``.
    """
    center = np.asarray(center, dtype=float)
    r_next = np.asarray(r_next, dtype=float)
    W = hat_weights(center, grid.e_axis, spread)[..., None]
    half = grid.half
    last = grid.d1 - 1
    # rows[..., q] = E[interpolant(center + spread*Z, r_q)] on every r grid line
    rows = W[..., half, :] * layer[half]
    for j in range(half):
        rows = rows + (W[..., j, :] * layer[j] + W[..., last - j, :] * layer[last - j])
    shape = np.broadcast_shapes(center.shape, r_next.shape)
    rows = np.broadcast_to(rows, shape + (grid.d2,))
    v = np.broadcast_to(np.clip(r_next, 0.0, grid.r_max) * ((grid.d2 - 1) / grid.r_max), shape)
    i = np.clip(np.floor(v).astype(np.intp), 0, grid.d2 - 2)
    s = v - i
    lo = np.take_along_axis(rows, i[..., None], axis=-1)[..., 0]
    hi = np.take_along_axis(rows, i[..., None] + 1, axis=-1)[..., 0]
    return lo + s * (hi - lo)


def _expect(layer: np.ndarray, grid: PolicyGrid, center, r_next, spread: float) -> np.ndarray:
    if grid.quadrature == "exact":
        return _expect_exact(layer, grid, center, r_next, spread)
    return _expect_gh(layer, grid, center, r_next, spread)


def _innovation_spread(gains: FilterGains, k: int) -> float:
    """Std of K_k nu_k for a scalar source."""
    return math.sqrt(max(float(gains.innovation_gain_cov(k)[0, 0]), 0.0))


def _mismatch_energy(A: float, e, r):
    # (ebreve' A' A ebreve + tr(A R A')) for scalars
    return A * A * (np.square(e) + r)


def stage_cost(ebreve, R, delta: int, k: int, gains: FilterGains, channel: ChannelParams, alpha_k: float):
    """Expected one-step cost alpha*delta + E[|mismatch_{k+1}|^2] + tr Q_{k+1}.

    Works for n-dimensional (ebreve, R) given as vector/matrix.
    """
    ebreve = np.atleast_1d(np.asarray(ebreve, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    A = gains.A[k]
    Ae = A @ ebreve
    energy = float(Ae @ Ae + np.trace(A @ R @ A.T))
    filt = float(np.trace(gains.innovation_gain_cov(k + 1)) + np.trace(gains.Q[k + 1]))
    return alpha_k * delta + (1.0 - channel.lam_c * delta) * energy + filt


def branch_weights(channel: ChannelParams) -> dict[str, float]:
    """Probabilities of (acked delivery, acked loss, lost ack) after a transmission."""
    lam, rho = channel.lam, channel.rho
    return {
        "reset": (1.0 - rho) * (1.0 - lam),
        "stay": (1.0 - rho) * lam,
        "feedback_lost": rho,
    }


def transition_expectation(
    V_next: np.ndarray,
    grid: PolicyGrid,
    ebreve,
    R,
    delta: int,
    k: int,
    gains: FilterGains,
    channel: ChannelParams,
):
    """E[V_{k+1}(ebreve', R') | ebreve, R, delta] for scalar sources.

    ``ebreve`` and ``R`` may be arrays (broadcast). The successor maps are

    * no transmission, or an acknowledged loss: ``A e + K nu``, ``A R A``
    * acknowledged delivery: ``K nu``, ``0``
    * lost acknowledgment: ``lam A e + K nu``, ``lam A R A + lam lam_c (A e)^2``
    """
    if V_next is None:
        raise ValueError("V_next is required")
    A = float(gains.A[k][0, 0])
    spread = _innovation_spread(gains, k + 1)
    e = np.asarray(ebreve, dtype=float)
    r = np.asarray(R, dtype=float)
    Ae = A * e
    ARA = A * A * r
    stay = _expect(V_next, grid, Ae, ARA, spread)
    if not delta:
        return stay
    wts = branch_weights(channel)
    lam, lam_c = channel.lam, channel.lam_c
    out = wts["stay"] * stay
    if wts["reset"]:
        out = out + wts["reset"] * _expect(V_next, grid, 0.0, 0.0, spread)
    if wts["feedback_lost"]:
        fb = _expect(V_next, grid, lam * Ae, lam * ARA + lam * lam_c * np.square(Ae), spread)
        out = out + wts["feedback_lost"] * fb
    return out


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """V[k] for k = 0..N and chi[k] for k = 0..N-1 on ``grid``."""

    V: np.ndarray  # (N+1, d1, d2)
    chi: np.ndarray  # (N, d1, d2)
    grid: PolicyGrid
    problem_hash: str
    lam: float
    rho: float
    alpha: tuple

    @property
    def N(self) -> int:
        return self.chi.shape[0]

    def chi_at(self, k: int, e, r):
        return interpolate(self.chi[k], self.grid, e, r)

    def value_at(self, k: int, e, r):
        return interpolate(self.V[k], self.grid, e, r)

    def metadata(self) -> dict:
        return {
            "problem_hash": self.problem_hash,
            "grid": asdict(self.grid),
            "lambda": self.lam,
            "rho": self.rho,
            "alpha": list(self.alpha),
            "N": self.N,
        }


def dp_synthesize(problem: Problem, grid: PolicyGrid, gains: FilterGains | None = None) -> PolicyTable:
    """Tabulate V and chi backward from V_N = 0.

    At each grid point both decisions are priced as stage cost plus expected
    continuation; V keeps the cheaper one and chi records the advantage of
    transmitting, so ``chi - alpha >= 0`` reproduces the argmin with ties
    sent. Only scalar sources are supported.
    """
    if problem.n != 1 or problem.m != 1:
        raise ProblemError([f"unsupported dimension for synthesis: n={problem.n}, m={problem.m} (only n=m=1)"])
    gains = gains or precompute_gains(problem)
    ch = problem.channel
    N = problem.N
    alpha = problem.cost.alpha
    E, Rg = grid.e_axis[:, None], grid.r_axis[None, :]
    V = np.zeros((N + 1, grid.d1, grid.d2))
    chi = np.zeros((N, grid.d1, grid.d2))
    wts = branch_weights(ch)
    for k in range(N - 1, -1, -1):
        A = float(gains.A[k][0, 0])
        nxt = V[k + 1]
        spread = _innovation_spread(gains, k + 1)
        energy = _mismatch_energy(A, E, Rg)
        filt = float(gains.innovation_gain_cov(k + 1)[0, 0] + gains.Q[k + 1][0, 0])
        Ae = A * E
        ARA = A * A * Rg
        e_stay = _expect(nxt, grid, Ae, ARA, spread)
        # Advantage of sending, written as weighted branch differences so that
        # chi is exactly 0 wherever all branches coincide (e.g. at the origin).
        gain = np.zeros_like(e_stay)
        if wts["reset"]:
            gain = gain + wts["reset"] * (e_stay - _expect(nxt, grid, 0.0, 0.0, spread))
        if wts["feedback_lost"]:
            e_fb = _expect(nxt, grid, ch.lam * Ae, ch.lam * ARA + ch.lam * ch.lam_c * np.square(Ae), spread)
            gain = gain + wts["feedback_lost"] * (e_stay - e_fb)
        wait = energy + filt + e_stay
        chi[k] = ch.lam_c * energy + gain
        send = wait - chi[k] + alpha[k]
        V[k] = np.where(chi[k] - alpha[k] >= 0.0, send, wait)
        if not (np.all(np.isfinite(V[k])) and np.all(np.isfinite(chi[k]))):
            raise FloatingPointError(f"non-finite value function at step {k}")
    V.setflags(write=False)
    chi.setflags(write=False)
    return PolicyTable(V, chi, grid, problem.hash, ch.lam, ch.rho, tuple(float(a) for a in alpha))


def clamp_statistics(problem: Problem, grid: PolicyGrid, gains: FilterGains | None = None) -> dict:
    """How often synthesis queried the table outside its bounds.

    Counts, over all (k, grid point) pairs, successor means with |e'| > e_max
    and successor covariances with R' > r_max (either branch); both are
    clamped to the edge of the table.
    """
    gains = gains or precompute_gains(problem)
    ch = problem.channel
    E, Rg = grid.e_axis[:, None], grid.r_axis[None, :]
    total = e_out = r_out = 0
    for k in range(problem.N):
        A = float(gains.A[k][0, 0])
        Ae = np.broadcast_to(A * E, (grid.d1, grid.d2))
        ARA = np.broadcast_to(A * A * Rg, (grid.d1, grid.d2))
        r_next = np.maximum(ARA, ch.lam * ARA + ch.lam * ch.lam_c * np.square(Ae))
        total += Ae.size
        e_out += int(np.count_nonzero(np.abs(Ae) > grid.e_max))
        r_out += int(np.count_nonzero(r_next > grid.r_max))
    return {"queries": total, "e_clamped": e_out, "r_clamped": r_out,
            "fraction": (e_out + r_out) / (2 * total) if total else 0.0}


def save_policy(table: PolicyTable, path) -> None:
    header = json.dumps(table.metadata(), sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(table.V, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(table.chi, dtype="<f8").tobytes())


def load_policy(path, problem: Problem | None = None) -> PolicyTable:
    """Read a policy file; with ``problem`` given, its hash must match."""
    with open(path, "rb") as fh:
        blob = fh.read()
    buf = io.BytesIO(blob)
    if buf.read(len(MAGIC)) != MAGIC:
        raise PolicyFileError(f"{path}: not a policy file (bad magic)")
    fixed = buf.read(12)
    if len(fixed) != 12:
        raise PolicyFileError(f"{path}: truncated header")
    version, hlen = struct.unpack("<IQ", fixed)
    if version != FORMAT_VERSION:
        raise PolicyFileError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    raw = buf.read(hlen)
    if len(raw) != hlen:
        raise PolicyFileError(f"{path}: truncated header")
    meta = json.loads(raw)
    grid = PolicyGrid(**meta["grid"])
    N = int(meta["N"])
    nv = (N + 1) * grid.d1 * grid.d2
    nc = N * grid.d1 * grid.d2
    body = buf.read()
    if len(body) != 8 * (nv + nc):
        raise PolicyFileError(f"{path}: truncated or oversized payload ({len(body)} bytes, expected {8 * (nv + nc)})")
    if problem is not None and meta["problem_hash"] != problem.hash:
        raise PolicyFileError(f"{path}: problem hash mismatch (file {meta['problem_hash'][:12]}, config {problem.hash[:12]})")
    data = np.frombuffer(body, dtype="<f8").astype(float)
    V = data[:nv].reshape(N + 1, grid.d1, grid.d2)
    chi = data[nv:].reshape(N, grid.d1, grid.d2)
    V.setflags(write=False)
    chi.setflags(write=False)
    return PolicyTable(V, chi, grid, meta["problem_hash"], float(meta["lambda"]), float(meta["rho"]), tuple(meta["alpha"]))
