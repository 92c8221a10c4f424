"""
Client for a served victim.

``RemoteVictim`` exposes the same query methods as the in-process ``VictimOracle``, so
the attack can target either one.
"""

from typing import Any, Dict, Optional, Tuple

import httpx
import torch
from loguru import logger

from dfms.core.errors import BudgetExhaustedError, DFMSError, InvariantError
from dfms.victim.ledger import LedgerSnapshot
from dfms.victim.wire import encode_images


class RemoteVictim:
    """
    Client for the victim query API.
    """

    def __init__(self, base_url: str, timeout: float = 60.0, client: Optional[httpx.Client] = None):
        """Connect to a victim server and read its interface from ``/v1/stats``.

        Args:
            base_url: Server root, e.g. ``http://127.0.0.1:8000``
            timeout: Request timeout in seconds
            client: Pre-built client (tests pass a FastAPI ``TestClient`` here)
        """
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._client = client if client is not None else httpx.Client(base_url=self.base_url, timeout=timeout)
        self._queries_used = 0
        self._remaining: Optional[int] = None

        stats = self.stats()
        self.num_classes: int = int(stats["num_classes"])
        self.input_shape: Tuple[int, int, int] = tuple(stats["input_shape"])
        logger.info(f"Initialized victim client: {self.base_url} ({self.num_classes} classes)")

    def _request(self, method: str, endpoint: str, json: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        try:
            response = self._client.request(method, endpoint, json=json)
        except httpx.RequestError as e:
            logger.error(f"Request error: {e}")
            raise DFMSError(f"victim at {self.base_url} unreachable: {e}") from e

        if response.status_code == 429:
            body = response.json()
            self._queries_used = body.get("queries_used", self._queries_used)
            raise BudgetExhaustedError(body.get("requested", 0), body.get("queries_used", 0), body.get("budget"))
        if response.status_code == 400:
            raise InvariantError(response.json().get("detail", "bad_shape"))
        try:
            response.raise_for_status()
        except httpx.HTTPStatusError as e:
            logger.error(f"HTTP error: {e}")
            raise DFMSError(f"victim returned HTTP {response.status_code}") from e
        return response.json()

    def _query(self, batch: torch.Tensor, mode: str, phase: str) -> Dict[str, Any]:
        images, shape = encode_images(batch)
        body = self._request("POST", "/v1/query", {"mode": mode, "images": images, "shape": shape, "phase": phase})
        self._queries_used = body["queries_used"]
        self._remaining = body["budget_remaining"]
        return body

    def hard_label_query(self, batch: torch.Tensor, phase: str) -> torch.Tensor:
        return torch.tensor(self._query(batch, "hard", phase)["labels"], dtype=torch.long)

    def soft_label_query(self, batch: torch.Tensor, phase: str) -> torch.Tensor:
        probs = self._query(batch, "soft", phase)["probs"]
        return torch.tensor(probs, dtype=torch.float64).reshape(len(probs), self.num_classes)

    def stats(self) -> Dict[str, Any]:
        body = self._request("GET", "/v1/stats")
        self._queries_used = body["used"]
        self._remaining = body["budget_remaining"]
        return body

    def ledger_snapshot(self) -> LedgerSnapshot:
        body = self.stats()
        return LedgerSnapshot(used=body["used"], budget=body["budget"], phase_breakdown=body["phase_breakdown"])

    @property
    def queries_used(self) -> int:
        """Ledger total as of the last response."""
        return self._queries_used

    @property
    def remaining(self) -> Optional[int]:
        return self._remaining

    def close(self) -> None:
        self._client.close()
