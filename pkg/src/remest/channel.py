"""Forward packet-erasure link and the zero-delay acknowledgment link."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ChannelParams

PAYLOAD, LOST, IDLE = "payload", "lost", "idle"
ACK, FEEDBACK_LOST, SILENT = "ack", "feedback_lost", "silent"


@dataclass(frozen=True, eq=False)
class ForwardSymbol:
    """What the decoder sees one step after a decision.

    ``lost`` and ``idle`` are distinguishable, so the decoder can tell a
    dropped packet from no transmission.
    """

    kind: str
    payload: Optional[np.ndarray] = None

    @classmethod
    def idle(cls) -> "ForwardSymbol":
        return cls(IDLE)

    @property
    def delta(self) -> int:
        return 0 if self.kind == IDLE else 1

    @property
    def gamma(self) -> Optional[int]:
        """Delivery bit, recoverable whenever something was sent."""
        return None if self.kind == IDLE else int(self.kind == PAYLOAD)


@dataclass(frozen=True)
class BackwardSymbol:
    kind: str
    gamma: Optional[int] = None

    @classmethod
    def silent(cls) -> "BackwardSymbol":
        return cls(SILENT)

    @property
    def theta(self) -> Optional[int]:
        if self.kind == SILENT:
            return None
        return int(self.kind == ACK)


def forward_transport(delta: int, payload, gamma: int) -> ForwardSymbol:
    if not delta:
        return ForwardSymbol(IDLE)
    if gamma:
        value = np.array(payload, dtype=float, copy=True)
        if not np.all(np.isfinite(value)):
            raise ValueError("transmitted payload must be finite")
        return ForwardSymbol(PAYLOAD, value)
    return ForwardSymbol(LOST)


def backward_transport(delta: int, gamma: int, theta: int) -> BackwardSymbol:
    if not delta:
        return BackwardSymbol(SILENT)
    if theta:
        return BackwardSymbol(ACK, int(gamma))
    return BackwardSymbol(FEEDBACK_LOST)


@dataclass(frozen=True, eq=False)
class ChannelDraws:
    """Per-step loss indicators; ``gamma == 0`` is a lost packet, ``theta == 0`` a lost ack."""

    gamma: np.ndarray
    theta: np.ndarray


def channel_draws(u_gamma: np.ndarray, u_theta: np.ndarray, channel: ChannelParams) -> ChannelDraws:
    """Threshold shared uniforms into bits: P(gamma=0) = lam, P(theta=0) = rho."""
    gamma = (u_gamma >= channel.lam).astype(np.int8)
    theta = (u_theta >= channel.rho).astype(np.int8)
    return ChannelDraws(gamma, theta)
