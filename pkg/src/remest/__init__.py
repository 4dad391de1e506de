"""Remote state estimation over a lossy link with unreliable acknowledgments.

A sensor-side encoder runs a Kalman filter and decides when to send its
estimate over a packet-erasure channel; acknowledgments come back over a
second erasure channel. The package tabulates the optimal symmetric
threshold rule by dynamic programming and evaluates it by Monte Carlo.
"""
from .model import (
    ChannelParams,
    CostParams,
    Problem,
    ProblemError,
    RngConfig,
    SourceParams,
    scalar_example,
    validate_problem,
)
from .encoder import FilterGains, precompute_gains
from .policy import PolicyGrid, PolicyTable, default_grid, dp_synthesize, load_policy, save_policy

__all__ = [
    "ChannelParams", "CostParams", "Problem", "ProblemError", "RngConfig", "SourceParams",
    "scalar_example", "validate_problem", "FilterGains", "precompute_gains", "PolicyGrid",
    "PolicyTable", "default_grid", "dp_synthesize", "load_policy", "save_policy",
]
__version__ = "0.1.0"
