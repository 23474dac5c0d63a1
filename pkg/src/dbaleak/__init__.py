"""Leakage estimation for QKD receivers with randomized gate voltages under pulsed blinding."""
from .model import (
    ChannelConfig,
    ConfigError,
    DecoyProtocol,
    DetectorConfig,
    EveStrategy,
    LeakageEstimate,
    ReceiverMode,
    SessionCounts,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig",
    "ConfigError",
    "DecoyProtocol",
    "DetectorConfig",
    "EveStrategy",
    "LeakageEstimate",
    "ReceiverMode",
    "SessionCounts",
    "validate",
]
