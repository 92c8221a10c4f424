"""
The victim behind its query endpoints.

Every path by which the attack observes the victim goes through ``hard_label_query``
or ``soft_label_query``: shapes are validated, the ledger is charged atomically, and
only then is the forward pass run. Hard labels are the argmax of the softmax with ties
resolved to the lowest class index, so a hard label always equals the argmax of the
soft label for the same image.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Tuple, Union

import torch
import torch.nn.functional as F

from dfms.core.errors import InvariantError
from dfms.nets.builder import PlanNetwork
from dfms.victim.ledger import LedgerSnapshot, QueryLedger


@dataclass
class VictimModel:
    """A trained classifier with its metadata.

    Attributes:
        network: Parameterized classifier (its ``spec`` carries the layer plan)
        num_classes: K
        input_shape: (channels, height, width)
        training_accuracy: Held-out accuracy reached by training
        flags: Training notes such as ``below_target`` or ``untrained``
    """

    network: PlanNetwork
    num_classes: int
    input_shape: Tuple[int, int, int]
    training_accuracy: float = 0.0
    flags: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        spec = self.network.spec
        if tuple(spec.output_shape) != (self.num_classes,):
            raise InvariantError(
                f"victim network outputs {tuple(spec.output_shape)}, expected ({self.num_classes},)"
            )
        if tuple(spec.input_shape) != tuple(self.input_shape):
            raise InvariantError(
                f"victim network expects {tuple(spec.input_shape)}, declared {tuple(self.input_shape)}"
            )
        self.network.eval()


def _check_batch(model: VictimModel, batch: torch.Tensor) -> None:
    if batch.dim() != 4 or tuple(batch.shape[1:]) != tuple(model.input_shape):
        raise InvariantError(
            f"bad_shape: expected (n, {', '.join(map(str, model.input_shape))}), got {tuple(batch.shape)}"
        )


def _probabilities(model: VictimModel, batch: torch.Tensor) -> torch.Tensor:
    device = next(model.network.parameters()).device
    with torch.inference_mode():
        scores = model.network(batch.to(device=device, dtype=torch.float32))
        return F.softmax(scores.double(), dim=1).cpu()


def hard_label_query(
    model: VictimModel,
    batch: torch.Tensor,
    ledger: QueryLedger,
    phase: str,
) -> torch.Tensor:
    """Top-1 labels for a batch; charges ``len(batch)`` queries to ``phase``.

    Raises:
        InvariantError: batch is not ``(n, *input_shape)``
        BudgetExhaustedError: the batch does not fit the budget; nothing is charged
    """
    _check_batch(model, batch)
    ledger.charge(batch.shape[0], phase)
    if batch.shape[0] == 0:
        return torch.zeros(0, dtype=torch.long)
    return torch.argmax(_probabilities(model, batch), dim=1)


def soft_label_query(
    model: VictimModel,
    batch: torch.Tensor,
    ledger: QueryLedger,
    phase: str,
) -> torch.Tensor:
    """Full softmax vectors ``(n, K)`` for a batch; accounting as :func:`hard_label_query`."""
    _check_batch(model, batch)
    ledger.charge(batch.shape[0], phase)
    if batch.shape[0] == 0:
        return torch.zeros((0, model.num_classes), dtype=torch.float64)
    return _probabilities(model, batch)


class VictimEndpoint(Protocol):
    """What the attack needs from a victim, local or remote."""

    num_classes: int
    input_shape: Tuple[int, int, int]

    def hard_label_query(self, batch: torch.Tensor, phase: str) -> torch.Tensor: ...

    def soft_label_query(self, batch: torch.Tensor, phase: str) -> torch.Tensor: ...

    def ledger_snapshot(self) -> LedgerSnapshot: ...

    @property
    def queries_used(self) -> int: ...

    @property
    def remaining(self) -> Optional[int]: ...


class VictimOracle:
    """In-process victim bound to its ledger. Safe to query from several threads."""

    def __init__(
        self,
        model: VictimModel,
        ledger: Optional[QueryLedger] = None,
        device: Union[str, torch.device] = "cpu",
    ):
        self.model = model
        self.ledger = ledger if ledger is not None else QueryLedger()
        self.model.network.to(device)

    @property
    def num_classes(self) -> int:
        return self.model.num_classes

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return tuple(self.model.input_shape)

    @property
    def queries_used(self) -> int:
        return self.ledger.used

    @property
    def remaining(self) -> Optional[int]:
        return self.ledger.remaining

    def hard_label_query(self, batch: torch.Tensor, phase: str) -> torch.Tensor:
        return hard_label_query(self.model, batch, self.ledger, phase)

    def soft_label_query(self, batch: torch.Tensor, phase: str) -> torch.Tensor:
        return soft_label_query(self.model, batch, self.ledger, phase)

    def ledger_snapshot(self) -> LedgerSnapshot:
        return self.ledger.snapshot()

    def restore_ledger(self, snapshot: LedgerSnapshot) -> None:
        self.ledger.restore(snapshot)
