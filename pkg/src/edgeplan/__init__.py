"""Planner for communication-computation efficient device-edge co-inference.

Given an abstract backbone network and a split point, a from-scratch DDPG
agent searches per-layer filter preservation ratios and a bottleneck-encoder
compression ratio that jointly trade off on-device compute, transmitted
feature size, and oracle-evaluated accuracy.
"""

from .errors import (
    ConfigError,
    EdgeplanError,
    NetworkError,
    OracleError,
    PlanError,
    SearchError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EdgeplanError",
    "NetworkError",
    "OracleError",
    "PlanError",
    "SearchError",
    "__version__",
]
