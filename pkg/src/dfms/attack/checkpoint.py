"""
Attack checkpoints.

A checkpoint is one ``torch.save`` file holding the network and optimizer states, the
RNG states, the ledger snapshot, the completed phases and the history so far, tagged
with a format version.
"""

import random
from pathlib import Path
from typing import Any, Dict

import numpy as np
import torch
from loguru import logger

from dfms.core.errors import CheckpointError

CHECKPOINT_FORMAT_VERSION = 1
LATEST = "latest.pt"


def capture_rng_states(run_rng: torch.Generator) -> Dict[str, Any]:
    return {
        "run": run_rng.get_state(),
        "torch": torch.get_rng_state(),
        "numpy": np.random.get_state(),
        "python": random.getstate(),
    }


def restore_rng_states(states: Dict[str, Any], run_rng: torch.Generator) -> None:
    run_rng.set_state(states["run"])
    torch.set_rng_state(states["torch"])
    np.random.set_state(states["numpy"])
    random.setstate(states["python"])


def save_checkpoint(path: Path, state: Dict[str, Any]) -> Path:
    """Write ``state`` atomically (temporary file, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save({"format_version": CHECKPOINT_FORMAT_VERSION, **state}, tmp)
    tmp.replace(path)
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: Path) -> Dict[str, Any]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointError: missing or unreadable file, or another format version
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        state = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    version = state.get("format_version") if isinstance(state, dict) else None
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"{path}: checkpoint format version {version}, expected {CHECKPOINT_FORMAT_VERSION}")
    logger.info(f"Loaded checkpoint {path} (phases done: {', '.join(state.get('completed_phases', [])) or 'none'})")
    return state
