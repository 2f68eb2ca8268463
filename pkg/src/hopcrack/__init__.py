"""BLE adaptive-frequency-hopping simulator and single-radio connection sniffer."""

from .afh import (
    ChannelMap,
    ConnectionParams,
    HopState,
    hop_sequence,
    mod_inverse,
    remap,
    select_next_channel,
    unmapped_next,
    validate_params,
)
from .sim import LossModel, MapUpdateSchedule, Simulation, new_connection
from .sniffer import Cracker, CrackerConfig, SnifferEstimate

__version__ = "0.1.0"

__all__ = [
    "ChannelMap",
    "ConnectionParams",
    "HopState",
    "hop_sequence",
    "mod_inverse",
    "remap",
    "select_next_channel",
    "unmapped_next",
    "validate_params",
    "LossModel",
    "MapUpdateSchedule",
    "Simulation",
    "new_connection",
    "Cracker",
    "CrackerConfig",
    "SnifferEstimate",
    "__version__",
]
