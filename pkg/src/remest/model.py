"""Problem parameters shared by every other module.

A problem is the triple (source, channel, cost). ``validate_problem`` checks
shapes and definiteness once and returns an immutable ``Problem`` that the
filter, simulator and synthesizer consume.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np


class ProblemError(ValueError):
    """Raised when a problem description is inconsistent.

    ``issues`` holds every diagnostic found, not only the first one.
    """

    def __init__(self, issues: list[str]):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SourceParams:
    """Time-varying Gauss-Markov source, one matrix per step k = 0..N."""

    N: int
    A: np.ndarray  # (N+1, n, n)
    C: np.ndarray  # (N+1, m, n)
    W: np.ndarray  # (N+1, n, n)
    V: np.ndarray  # (N+1, m, m)
    m0: np.ndarray  # (n,)
    M0: np.ndarray  # (n, n)

    def __post_init__(self):
        for name in ("A", "C", "W", "V", "m0", "M0"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @classmethod
    def time_invariant(cls, N, A, C, W, V, m0, M0) -> "SourceParams":
        """Replicate constant matrices over the horizon.

        Scalars are promoted to 1x1 matrices, so the scalar example problem
        reads ``SourceParams.time_invariant(100, 0.9, 1, 3, 1, 0, 1)``.
        """
        A, C, W, V = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (A, C, W, V))
        m0 = np.atleast_1d(np.asarray(m0, dtype=float))
        M0 = np.atleast_2d(np.asarray(M0, dtype=float))
        rep = lambda X: np.repeat(X[None], N + 1, axis=0)
        return cls(N=int(N), A=rep(A), C=rep(C), W=rep(W), V=rep(V), m0=m0, M0=M0)

    @property
    def n(self) -> int:
        return self.A.shape[-1]

    @property
    def m(self) -> int:
        return self.C.shape[-2]


@dataclass(frozen=True)
class ChannelParams:
    """Forward error rate ``lam`` = P(gamma=0), backward error rate ``rho`` = P(theta=0)."""

    lam: float
    rho: float

    @property
    def lam_c(self) -> float:
        return 1.0 - self.lam

    @property
    def rho_c(self) -> float:
        return 1.0 - self.rho


@dataclass(frozen=True, eq=False)
class CostParams:
    alpha: np.ndarray  # (N+1,)

    def __post_init__(self):
        object.__setattr__(self, "alpha", _frozen(np.atleast_1d(self.alpha)))

    @classmethod
    def constant(cls, alpha: float, N: int) -> "CostParams":
        return cls(np.full(N + 1, float(alpha)))


@dataclass(frozen=True)
class RngConfig:
    """Master seed plus episode index; together they pin one episode's noise."""

    seed: int
    stream: int = 0


@dataclass(frozen=True, eq=False)
class Problem:
    """Validated, immutable problem. Build it with :func:`validate_problem`."""

    source: SourceParams
    channel: ChannelParams
    cost: CostParams
    hash: str = field(default="")

    @property
    def N(self) -> int:
        return self.source.N

    @property
    def n(self) -> int:
        return self.source.n

    @property
    def m(self) -> int:
        return self.source.m

    def with_channel(self, lam: float, rho: float) -> "Problem":
        return validate_problem(self.source, ChannelParams(lam, rho), self.cost)

    def with_alpha(self, alpha) -> "Problem":
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (self.N + 1,))
        return validate_problem(self.source, self.channel, CostParams(alpha.copy()))


def _is_spd(X: np.ndarray) -> bool:
    if not np.allclose(X, X.T, rtol=1e-12, atol=1e-12):
        return False
    try:
        np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return False
    return True


def _is_psd(X: np.ndarray) -> bool:
    if not np.allclose(X, X.T, rtol=1e-12, atol=1e-12):
        return False
    # Cholesky of a slightly shifted matrix accepts singular PSD inputs.
    scale = max(1.0, float(np.abs(X).max()))
    try:
        np.linalg.cholesky(X + 1e-12 * scale * np.eye(len(X)))
    except np.linalg.LinAlgError:
        return False
    return True


def problem_hash(source: SourceParams, channel: ChannelParams, cost: CostParams) -> str:
    payload = {
        "N": source.N,
        "A": source.A.tolist(),
        "C": source.C.tolist(),
        "W": source.W.tolist(),
        "V": source.V.tolist(),
        "m0": source.m0.tolist(),
        "M0": source.M0.tolist(),
        "lambda": float(channel.lam),
        "rho": float(channel.rho),
        "alpha": cost.alpha.tolist(),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def validate_problem(
    source: SourceParams | Problem, channel: ChannelParams | None = None, cost: CostParams | None = None
) -> Problem:
    """Check dimensions, definiteness and ranges; return an immutable Problem.

    Passing an already validated ``Problem`` returns it unchanged.
    """
    if isinstance(source, Problem):
        return source
    issues: list[str] = []
    N = source.N
    if N < 1:
        issues.append(f"horizon N must be >= 1, got {N}")
    steps = N + 1
    A, C, W, V = source.A, source.C, source.W, source.V
    if A.ndim != 3 or A.shape[1] != A.shape[2]:
        raise ProblemError([f"A must have shape (N+1, n, n), got {A.shape}"])
    n = A.shape[1]
    if C.ndim != 3 or C.shape[2] != n:
        raise ProblemError([f"C must have shape (N+1, m, {n}), got {C.shape}"])
    m = C.shape[1]
    expected = {"A": (steps, n, n), "C": (steps, m, n), "W": (steps, n, n), "V": (steps, m, m)}
    for name, shape in expected.items():
        got = getattr(source, name).shape
        if got != shape:
            issues.append(f"{name} has shape {got}, expected {shape}")
    if source.m0.shape != (n,):
        issues.append(f"m0 has shape {source.m0.shape}, expected ({n},)")
    if source.M0.shape != (n, n):
        issues.append(f"M0 has shape {source.M0.shape}, expected ({n}, {n})")
    if issues:
        raise ProblemError(issues)

    for name in ("A", "C", "W", "V", "m0", "M0"):
        if not np.all(np.isfinite(getattr(source, name))):
            issues.append(f"{name} contains non-finite entries")
    for k in range(steps):
        if not _is_spd(W[k]):
            issues.append(f"W[{k}] must be symmetric positive definite")
            break
    for k in range(steps):
        if not _is_spd(V[k]):
            issues.append(f"V[{k}] must be symmetric positive definite")
            break
    if not _is_psd(source.M0):
        issues.append("M0 must be symmetric positive semidefinite")

    if channel is None or cost is None:
        raise ProblemError(issues + ["channel and cost parameters are required"])
    for name, rate in (("lambda", channel.lam), ("rho", channel.rho)):
        if not (0.0 <= rate <= 1.0):
            issues.append(f"{name}={rate} is outside [0, 1]")
    alpha = cost.alpha
    if alpha.shape != (steps,):
        issues.append(f"alpha has shape {alpha.shape}, expected ({steps},)")
    elif np.any(~np.isfinite(alpha)) or np.any(alpha < 0):
        issues.append("alpha must be finite and nonnegative")
    if issues:
        raise ProblemError(issues)

    channel = ChannelParams(float(channel.lam), float(channel.rho))
    return Problem(source, channel, cost, problem_hash(source, channel, cost))


def scalar_example(N: int = 100, lam: float = 0.1, rho: float = 0.0, alpha: float = 1.0) -> Problem:
    """The scalar benchmark: A=0.9, C=1, W=3, V=1, m0=0, M0=1."""
    source = SourceParams.time_invariant(N, 0.9, 1.0, 3.0, 1.0, 0.0, 1.0)
    return validate_problem(source, ChannelParams(lam, rho), CostParams.constant(alpha, N))
