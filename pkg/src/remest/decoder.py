"""Monitor-side linear estimator driven only by forward-channel symbols."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PAYLOAD, ForwardSymbol


@dataclass(frozen=True, eq=False)
class DecoderState:
    xhat: np.ndarray
    staleness: int = 0


def decoder_init(m0) -> DecoderState:
    return DecoderState(np.array(m0, dtype=float, copy=True), 0)


def decoder_update(state: DecoderState, symbol: ForwardSymbol, A_prev: np.ndarray) -> DecoderState:
    """x̂_k = A x̌_{k-1} on a delivered payload, A x̂_{k-1} otherwise.

    Lost and idle symbols carry no correction term: under a scheduling rule
    that is symmetric in the encoder's mismatch, the conditional mean of the
    mismatch given either event is zero.
    """
    if symbol.kind == PAYLOAD:
        return DecoderState(A_prev @ symbol.payload, 0)
    return DecoderState(A_prev @ state.xhat, state.staleness + 1)
