"""
The attack: configuration, history, checkpoints and the phased training loop.
"""

from dfms.attack.checkpoint import LATEST, load_checkpoint, save_checkpoint
from dfms.attack.config import (
    AttackConfig,
    build_config,
    config_keys,
    config_to_text,
    flatten_config,
    load_config,
    parse_config_text,
    save_config,
)
from dfms.attack.history import MetricsWriter, StepRecord, TrainingHistory
from dfms.attack.loop import PHASES, AttackResult, AttackRunner, run_attack

__all__ = [
    "LATEST",
    "load_checkpoint",
    "save_checkpoint",
    "AttackConfig",
    "build_config",
    "config_keys",
    "config_to_text",
    "flatten_config",
    "load_config",
    "parse_config_text",
    "save_config",
    "MetricsWriter",
    "StepRecord",
    "TrainingHistory",
    "PHASES",
    "AttackResult",
    "AttackRunner",
    "run_attack",
]
