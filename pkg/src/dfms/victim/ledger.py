"""
Query ledger: the exact count of images sent to the victim, per phase, under a hard
budget.

Charging is an atomic check-and-add: a batch that would overflow the budget is
rejected whole and nothing is recorded. When a log path is given, every charge is
appended to a text log (``charge<TAB>phase<TAB>count<TAB>timestamp``) so totals
survive restarts; ``restore`` lines mark checkpoint rollbacks.
"""

import json
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional

from loguru import logger
from pydantic import BaseModel, model_validator

from dfms.core.errors import BudgetExhaustedError, InvariantError

# Phase names used by the attack
PHASE_INIT_CLONE = "init_clone"
PHASE_RETRAIN_CLONE = "retrain_clone"
PHASE_ALTERNATING = "alternating"


def total_query_cost(n_c: int, n_q: int) -> int:
    """Total victim queries of a complete attack: ``2 * n_C + N_Q``.

    Two clone-initialization phases spend ``n_C`` each, the alternating phase ``N_Q``
    (itself ``E * N_P``: epochs times images per epoch).
    """
    if n_c < 0 or n_q < 0:
        raise InvariantError(f"query counts must be >= 0, got n_C={n_c}, N_Q={n_q}")
    return 2 * n_c + n_q


def alternating_queries(epochs: int, images_per_epoch: int) -> int:
    """``N_Q = E * N_P``."""
    if epochs < 0 or images_per_epoch < 0:
        raise InvariantError("epochs and images_per_epoch must be >= 0")
    return epochs * images_per_epoch


class LedgerSnapshot(BaseModel):
    """Point-in-time copy of a ledger."""

    used: int
    budget: Optional[int]
    phase_breakdown: Dict[str, int]

    @model_validator(mode="after")
    def check_consistency(self) -> "LedgerSnapshot":
        if self.used != sum(self.phase_breakdown.values()):
            raise ValueError("used must equal the sum of phase_breakdown")
        if self.budget is not None and self.used > self.budget:
            raise ValueError("used exceeds budget")
        return self

    @property
    def remaining(self) -> Optional[int]:
        return None if self.budget is None else self.budget - self.used


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


class QueryLedger:
    """Thread-safe, monotone victim query counter with an optional hard budget."""

    def __init__(self, budget: Optional[int] = None, log_path: Optional[Path] = None):
        """Create an empty ledger.

        Args:
            budget: Maximum number of queries, or None for unlimited
            log_path: Append-only text log; parent directories are created
        """
        if budget is not None and budget <= 0:
            raise InvariantError(f"budget must be positive or unlimited, got {budget}")
        self._budget = budget
        self._used = 0
        self._phases: Dict[str, int] = {}
        self._lock = threading.Lock()
        self._log_path = Path(log_path) if log_path is not None else None
        if self._log_path is not None:
            self._log_path.parent.mkdir(parents=True, exist_ok=True)

    @property
    def used(self) -> int:
        return self._used

    @property
    def budget(self) -> Optional[int]:
        return self._budget

    @property
    def remaining(self) -> Optional[int]:
        with self._lock:
            return None if self._budget is None else self._budget - self._used

    @property
    def phase_breakdown(self) -> Dict[str, int]:
        with self._lock:
            return dict(self._phases)

    def can_afford(self, count: int) -> bool:
        with self._lock:
            return self._budget is None or self._used + count <= self._budget

    def charge(self, count: int, phase: str) -> int:
        """Record ``count`` queries under ``phase``.

        Returns:
            The ledger total after charging

        Raises:
            BudgetExhaustedError: the batch does not fit; the ledger is unchanged
        """
        if count < 0:
            raise InvariantError(f"cannot charge a negative count ({count})")
        with self._lock:
            if self._budget is not None and self._used + count > self._budget:
                logger.warning(
                    f"Rejected {count} queries for phase '{phase}': {self._used}/{self._budget} used"
                )
                raise BudgetExhaustedError(count, self._used, self._budget)
            self._used += count
            self._phases[phase] = self._phases.get(phase, 0) + count
            if self._log_path is not None and count:
                with self._log_path.open("a", encoding="utf-8") as f:
                    f.write(f"charge\t{phase}\t{count}\t{_timestamp()}\n")
            return self._used

    def snapshot(self) -> LedgerSnapshot:
        with self._lock:
            return LedgerSnapshot(used=self._used, budget=self._budget, phase_breakdown=dict(self._phases))

    def restore(self, snapshot: LedgerSnapshot) -> None:
        """Roll the ledger back (or forward) to a snapshot, e.g. when resuming a checkpoint."""
        with self._lock:
            self._used = snapshot.used
            self._phases = dict(snapshot.phase_breakdown)
            if self._log_path is not None:
                with self._log_path.open("a", encoding="utf-8") as f:
                    f.write(f"restore\t{json.dumps(self._phases, sort_keys=True)}\t{_timestamp()}\n")
        logger.info(f"Ledger restored to {snapshot.used} queries")

    @classmethod
    def load(cls, log_path: Path, budget: Optional[int] = None) -> "QueryLedger":
        """Rebuild a ledger by replaying its log; new charges keep appending to it."""
        ledger = cls(budget=budget, log_path=None)
        path = Path(log_path)
        if path.exists():
            for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
                if not line.strip():
                    continue
                kind, payload, *rest = line.split("\t")
                if kind == "charge":
                    phase, count = payload, int(rest[0])
                    ledger._used += count
                    ledger._phases[phase] = ledger._phases.get(phase, 0) + count
                elif kind == "restore":
                    ledger._phases = {k: int(v) for k, v in json.loads(payload).items()}
                    ledger._used = sum(ledger._phases.values())
                else:
                    raise InvariantError(f"{path}:{line_no}: unknown ledger record '{kind}'")
        if budget is not None and ledger._used > budget:
            logger.warning(f"Replayed ledger {path} already exceeds budget ({ledger._used} > {budget})")
        ledger._log_path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        logger.info(f"Loaded ledger from {path}: {ledger._used} queries used")
        return ledger
