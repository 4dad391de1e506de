"""Sensor-side recursions: Kalman filter, mismatch mean/covariance, threshold rule."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Optional

import numpy as np

from .channel import ACK, FEEDBACK_LOST, SILENT, BackwardSymbol
from .model import ChannelParams, Problem

if TYPE_CHECKING:
    from .policy import PolicyTable


class ProtocolError(RuntimeError):
    """An acknowledgment symbol that cannot follow the previous decision."""


@dataclass(frozen=True, eq=False)
class FilterGains:
    """Observation-independent filter quantities for k = 0..N.

    ``M`` is the one-step prediction covariance (``M[0] = M0``), ``Q`` the
    filtered covariance, ``K = Q C' V^-1``, ``L = C' V^-1 C`` and
    ``Ninv = C M C' + V`` the innovation covariance.
    """

    A: np.ndarray
    C: np.ndarray
    m0: np.ndarray
    M: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    L: np.ndarray
    Ninv: np.ndarray

    @property
    def N(self) -> int:
        return self.M.shape[0] - 1

    def innovation_gain_cov(self, k: int) -> np.ndarray:
        """Covariance of K_k nu_k, i.e. K N K'."""
        return self.K[k] @ self.Ninv[k] @ self.K[k].T


def _covariance_update(M: np.ndarray, C: np.ndarray, V: np.ndarray) -> np.ndarray:
    S = C @ M @ C.T + V
    G = np.linalg.solve(S, C @ M).T
    Q = M - G @ C @ M
    return 0.5 * (Q + Q.T)


def _information_update(M: np.ndarray, L: np.ndarray) -> Optional[np.ndarray]:
    # The information form needs M^-1; report failure so the caller can fall back.
    if np.linalg.cond(M) > 1e12:
        return None
    Q = np.linalg.inv(np.linalg.inv(M) + L)
    return 0.5 * (Q + Q.T)


def _scalar_gains(src, form: str) -> FilterGains:
    # Same recursions on plain floats; per-call numpy overhead dominates at n = m = 1.
    A, C, W, V = (x[:, 0, 0].tolist() for x in (src.A, src.C, src.W, src.V))
    steps = src.N + 1
    M, Q, K, L, S = [0.0] * steps, [0.0] * steps, [0.0] * steps, [0.0] * steps, [0.0] * steps
    for k in range(steps):
        M[k] = float(src.M0[0, 0]) if k == 0 else A[k - 1] * A[k - 1] * Q[k - 1] + W[k - 1]
        L[k] = C[k] * C[k] / V[k]
        S[k] = C[k] * M[k] * C[k] + V[k]
        if form == "information" and M[k] > 0.0:  # a 1x1 M is singular only at 0
            Q[k] = 1.0 / (1.0 / M[k] + L[k])
        else:
            Q[k] = M[k] - M[k] * C[k] * C[k] * M[k] / S[k]
        K[k] = Q[k] * C[k] / V[k]
    arrs = [np.array(v).reshape(steps, 1, 1) for v in (M, Q, K, L, S)]
    for arr in arrs:
        arr.setflags(write=False)
    return FilterGains(src.A, src.C, src.m0, *arrs)


def precompute_gains(problem: Problem, form: str = "information") -> FilterGains:
    """Run the covariance recursions once; ``form`` picks the measurement update.

    With ``form="information"`` a singular prediction covariance (possible at
    k = 0 when M0 is singular) silently uses the covariance form instead.
    """
    if form not in ("information", "covariance"):
        raise ValueError(f"unknown form {form!r}")
    src = problem.source
    if src.n == 1 and src.m == 1:
        return _scalar_gains(src, form)
    steps = src.N + 1
    n, m = src.n, src.m
    M = np.empty((steps, n, n))
    Q = np.empty((steps, n, n))
    K = np.empty((steps, n, m))
    L = np.empty((steps, n, n))
    Ninv = np.empty((steps, m, m))
    for k in range(steps):
        C, V = src.C[k], src.V[k]
        Vinv = np.linalg.inv(V)
        L[k] = C.T @ Vinv @ C
        if k == 0:
            M[k] = src.M0
        else:
            Mk = src.A[k - 1] @ Q[k - 1] @ src.A[k - 1].T + src.W[k - 1]
            M[k] = 0.5 * (Mk + Mk.T)
        Qk = _information_update(M[k], L[k]) if form == "information" else None
        Q[k] = Qk if Qk is not None else _covariance_update(M[k], C, V)
        K[k] = Q[k] @ C.T @ Vinv
        Ninv[k] = C @ M[k] @ C.T + V
    for arr in (M, Q, K, L, Ninv):
        arr.setflags(write=False)
    return FilterGains(src.A, src.C, src.m0, M, Q, K, L, Ninv)


@dataclass(frozen=True, eq=False)
class EncoderState:
    xcheck: np.ndarray
    ebreve: np.ndarray
    R: np.ndarray
    nu: np.ndarray


def filter_update(state: Optional[EncoderState], y_k, gains: FilterGains, k: int) -> EncoderState:
    """Kalman measurement update at step k; pass ``state=None`` for k = 0.

    At k = 0 the mismatch starts at ``ebreve = K0 nu0``, ``R = 0``. For k >= 1
    only ``xcheck`` and ``nu`` change; ``mismatch_update`` advances the rest.
    """
    y_k = np.atleast_1d(np.asarray(y_k, dtype=float))
    if k == 0:
        prior = gains.m0
    else:
        if state is None:
            raise ValueError("filter_update needs the previous state for k >= 1")
        prior = gains.A[k - 1] @ state.xcheck
    nu = y_k - gains.C[k] @ prior
    xcheck = prior + gains.K[k] @ nu
    if k == 0:
        n = len(prior)
        return EncoderState(xcheck, gains.K[0] @ nu, np.zeros((n, n)), nu)
    return replace(state, xcheck=xcheck, nu=nu)


def mismatch_coefficients(delta: int, gamma: int, theta: int, lam_c: float) -> tuple[float, float]:
    """(thetabar, thetabarbar) for one step.

    thetabar is the encoder's belief that the last packet got through:
    1 after an acknowledged delivery, lam_c when the ack was lost, 0 otherwise.
    """
    tb = theta * delta * gamma + lam_c * (1 - theta) * delta
    tbb = (1 - theta) * (lam_c * delta - lam_c**2 * delta)
    return float(tb), float(tbb)


def mismatch_update(
    state: EncoderState,
    delta_prev: int,
    ack: BackwardSymbol,
    gains: FilterGains,
    k: int,
    channel: ChannelParams,
) -> EncoderState:
    """Advance (ebreve, R) from k-1 to k given the backward symbol for step k-1.

    ``state.nu`` must already hold nu_k (call ``filter_update`` first).
    """
    if delta_prev:
        if ack.kind == ACK:
            gamma, theta = int(ack.gamma), 1
        elif ack.kind == FEEDBACK_LOST:
            gamma, theta = 0, 0  # gamma unknown to the encoder; the coefficients ignore it when theta=0
        else:
            raise ProtocolError(f"step {k}: silent backward channel after a transmission")
    else:
        if ack.kind != SILENT:
            raise ProtocolError(f"step {k}: backward symbol {ack.kind!r} without a transmission")
        gamma, theta = 0, 0
    tb, tbb = mismatch_coefficients(int(delta_prev), gamma, theta, channel.lam_c)
    A = gains.A[k - 1]
    Ae = A @ state.ebreve
    ebreve = (1.0 - tb) * Ae + gains.K[k] @ state.nu
    R = (1.0 - tb) * (A @ state.R @ A.T) + tbb * np.outer(Ae, Ae)
    return replace(state, ebreve=ebreve, R=0.5 * (R + R.T))


def schedule(state: EncoderState, policy: "PolicyTable", k: int, alpha_k: float) -> int:
    """Transmit iff chi_k(ebreve, R) - alpha_k >= 0 (ties transmit)."""
    if not 0 <= k < policy.N:
        raise IndexError(f"step {k} outside policy range 0..{policy.N - 1}")
    chi, _ = policy.chi_at(k, state.ebreve[0], state.R[0, 0])
    return int(chi - alpha_k >= 0.0)
