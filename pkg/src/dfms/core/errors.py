"""
Exception hierarchy shared by every dfms module.
"""

from typing import Optional


class DFMSError(Exception):
    """Base class for all dfms errors."""


class InvariantError(DFMSError, ValueError):
    """An input violates a documented invariant. The message names the invariant."""


class BudgetExhaustedError(DFMSError):
    """A query batch would push the ledger past its budget. Nothing was charged."""

    def __init__(self, requested: int, used: int, budget: Optional[int]):
        self.requested = requested
        self.used = used
        self.budget = budget
        super().__init__(
            f"budget exhausted: requested {requested} with {used}/{budget} used"
        )


class PhaseError(DFMSError):
    """An attack phase failed. ``phase`` names it; ``__cause__`` holds the original error."""

    def __init__(self, phase: str, message: str):
        self.phase = phase
        super().__init__(f"[{phase}] {message}")


class ConfigError(DFMSError):
    """Config file missing, unparseable, or holding an invalid value."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}")


class CheckpointError(DFMSError):
    """Checkpoint or serialized artifact is unreadable or has the wrong format version."""
