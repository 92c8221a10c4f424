"""
Victim checkpoints: the network (spec text + parameters) plus the victim metadata,
under a format-version tag.
"""

from pathlib import Path
from typing import Union

import torch
from loguru import logger

from dfms.core.errors import CheckpointError
from dfms.nets.builder import PlanNetwork
from dfms.nets.spec import NetworkSpec
from dfms.victim.oracle import VictimModel

VICTIM_FORMAT_VERSION = 1


def save_victim(path: Path, victim: VictimModel) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": VICTIM_FORMAT_VERSION,
            "spec": victim.network.spec.to_text(),
            "state_dict": {k: v.cpu() for k, v in victim.network.state_dict().items()},
            "num_classes": victim.num_classes,
            "input_shape": list(victim.input_shape),
            "training_accuracy": victim.training_accuracy,
            "flags": list(victim.flags),
        },
        path,
    )
    logger.info(f"Saved victim ({victim.num_classes} classes, accuracy {victim.training_accuracy:.4f}) to {path}")


def load_victim(path: Path, map_location: Union[str, torch.device] = "cpu") -> VictimModel:
    """Load a victim written by :func:`save_victim`.

    Raises:
        CheckpointError: unreadable file or unknown format version
    """
    try:
        payload = torch.load(Path(path), map_location=map_location, weights_only=False)
    except (OSError, RuntimeError) as e:
        raise CheckpointError(f"cannot read victim file {path}: {e}") from e
    version = payload.get("format_version") if isinstance(payload, dict) else None
    if version != VICTIM_FORMAT_VERSION:
        raise CheckpointError(f"{path}: victim format version {version}, expected {VICTIM_FORMAT_VERSION}")

    network = PlanNetwork(NetworkSpec.from_text(payload["spec"]))
    network.load_state_dict(payload["state_dict"])
    victim = VictimModel(
        network=network,
        num_classes=int(payload["num_classes"]),
        input_shape=tuple(payload["input_shape"]),
        training_accuracy=float(payload["training_accuracy"]),
        flags=list(payload["flags"]),
    )
    logger.info(f"Loaded victim from {path}")
    return victim
