"""
The victim: training, storage, metered querying and HTTP serving.
"""

from dfms.victim.client import RemoteVictim
from dfms.victim.ledger import (
    PHASE_ALTERNATING,
    PHASE_INIT_CLONE,
    PHASE_RETRAIN_CLONE,
    LedgerSnapshot,
    QueryLedger,
    alternating_queries,
    total_query_cost,
)
from dfms.victim.oracle import VictimEndpoint, VictimModel, VictimOracle, hard_label_query, soft_label_query
from dfms.victim.server import create_app, serve
from dfms.victim.storage import load_victim, save_victim
from dfms.victim.training import VictimTrainConfig, train_victim

__all__ = [
    "RemoteVictim",
    "PHASE_ALTERNATING",
    "PHASE_INIT_CLONE",
    "PHASE_RETRAIN_CLONE",
    "LedgerSnapshot",
    "QueryLedger",
    "alternating_queries",
    "total_query_cost",
    "VictimEndpoint",
    "VictimModel",
    "VictimOracle",
    "hard_label_query",
    "soft_label_query",
    "create_app",
    "serve",
    "load_victim",
    "save_victim",
    "VictimTrainConfig",
    "train_victim",
]
