"""Split LSTM training and inference across edge, drone and server over erasure links."""

from .channel import ChannelSpec, Link
from .errors import (
    CheckpointError,
    ConfigurationError,
    ContractViolation,
    ParseError,
    SchemaError,
    StorageError,
    UavSplitError,
)
from .network import Path, Role, SplitNetwork, Strategy, backward, forward_direct, forward_relay, predict
from .sim import SessionConfig, evaluate, run_training_session, select_strategy

__version__ = "0.1.0"

__all__ = [
    "ChannelSpec",
    "CheckpointError",
    "ConfigurationError",
    "ContractViolation",
    "Link",
    "ParseError",
    "Path",
    "Role",
    "SchemaError",
    "SessionConfig",
    "SplitNetwork",
    "StorageError",
    "Strategy",
    "UavSplitError",
    "backward",
    "evaluate",
    "forward_direct",
    "forward_relay",
    "predict",
    "run_training_session",
    "select_strategy",
]
