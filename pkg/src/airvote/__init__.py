"""Seedable simulator and analysis toolkit for one-bit over-the-air
majority-vote aggregation in wireless federated learning."""

__version__ = "0.1.0"

from .channel import CellConfig, ChannelDraw, draw_user_channels, path_loss
from .errors import CapacityError, ConfigError
from .montecarlo import ExperimentRecord, McEstimate, McParams, estimate_failure, sweep
from .relay import ClusterLayout, RelayGains, RelaySelection
from .voting import LocalSuccessModel, draw_votes, majority_vote, sign

__all__ = [
    "__version__",
    "CapacityError",
    "CellConfig",
    "ChannelDraw",
    "ClusterLayout",
    "ConfigError",
    "ExperimentRecord",
    "LocalSuccessModel",
    "McEstimate",
    "McParams",
    "RelayGains",
    "RelaySelection",
    "draw_user_channels",
    "draw_votes",
    "estimate_failure",
    "majority_vote",
    "path_loss",
    "sign",
    "sweep",
]
