"""
dfms core package.

Configuration, logging and the shared exception hierarchy.
"""

from dfms.core.config import Settings, settings
from dfms.core.errors import (
    BudgetExhaustedError,
    CheckpointError,
    ConfigError,
    DFMSError,
    InvariantError,
    PhaseError,
)
from dfms.core.logger import setup_logging

__all__ = [
    "Settings",
    "settings",
    "DFMSError",
    "InvariantError",
    "BudgetExhaustedError",
    "PhaseError",
    "ConfigError",
    "CheckpointError",
    "setup_logging",
]
