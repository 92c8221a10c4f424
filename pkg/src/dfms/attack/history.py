"""
Run history: one record per training step, plus the metrics log of loss reports.
"""

import math
from pathlib import Path
from typing import Iterator, List, Optional

import pandas as pd
from loguru import logger
from pydantic import BaseModel

from dfms.core.errors import InvariantError
from dfms.losses import LossReport

HISTORY_CSV = "history.csv"
METRICS_CSV = "metrics.csv"


class StepRecord(BaseModel):
    """One step of one phase. Accuracy and histogram are set at evaluation checkpoints only."""

    step: int
    phase: str
    queries_used: int
    loss_g: Optional[float] = None
    loss_d: Optional[float] = None
    loss_c: Optional[float] = None
    clone_accuracy: Optional[float] = None
    hist_entropy: Optional[float] = None
    class_histogram: Optional[List[int]] = None


HISTORY_COLUMNS = list(StepRecord.model_fields)


class TrainingHistory:
    """Ordered step records with nondecreasing query counts."""

    def __init__(self, records: Optional[List[StepRecord]] = None, query_limit: Optional[int] = None):
        self.query_limit = query_limit
        self._records: List[StepRecord] = []
        for record in records or []:
            self.append(record)

    def append(self, record: StepRecord) -> None:
        if self._records and record.queries_used < self._records[-1].queries_used:
            raise InvariantError(
                f"queries_used must be nondecreasing: {record.queries_used} after {self._records[-1].queries_used}"
            )
        if self.query_limit is not None and record.queries_used > self.query_limit:
            raise InvariantError(f"queries_used {record.queries_used} exceeds the limit {self.query_limit}")
        self._records.append(record)

    @property
    def records(self) -> List[StepRecord]:
        return list(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[StepRecord]:
        return iter(self._records)

    def checkpoints(self) -> List[StepRecord]:
        """Records carrying a clone accuracy."""
        return [r for r in self._records if r.clone_accuracy is not None]

    def phase_records(self, phase: str) -> List[StepRecord]:
        return [r for r in self._records if r.phase == phase]

    def final_accuracy(self) -> Optional[float]:
        checkpoints = self.checkpoints()
        return checkpoints[-1].clone_accuracy if checkpoints else None

    def last_histogram(self) -> Optional[List[int]]:
        for record in reversed(self._records):
            if record.class_histogram is not None:
                return list(record.class_histogram)
        return None

    def accuracy_curve(self) -> pd.DataFrame:
        checkpoints = self.checkpoints()
        return pd.DataFrame(
            {
                "queries_used": [r.queries_used for r in checkpoints],
                "clone_accuracy": [r.clone_accuracy for r in checkpoints],
            }
        )

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for record in self._records:
            row = record.model_dump()
            hist = row["class_histogram"]
            row["class_histogram"] = ";".join(map(str, hist)) if hist is not None else None
            rows.append(row)
        return pd.DataFrame(rows, columns=HISTORY_COLUMNS)

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")
        return path

    @classmethod
    def read_csv(cls, path: Path) -> "TrainingHistory":
        frame = pd.read_csv(path, dtype={"class_histogram": str, "phase": str})
        records = []
        for row in frame.to_dict(orient="records"):
            clean = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()}
            if clean.get("class_histogram") is not None:
                clean["class_histogram"] = [int(c) for c in str(clean["class_histogram"]).split(";")]
            records.append(StepRecord(**clean))
        logger.info(f"Read {len(records)} history records from {path}")
        return cls(records)


class MetricsWriter:
    """Buffers ``LossReport`` rows and appends them to ``metrics.csv`` on flush."""

    COLUMNS = ["step", "loss", "value", "components"]

    def __init__(self, path: Path):
        self.path = Path(path)
        self._rows: List[dict] = []

    def add(self, step: int, report: LossReport) -> None:
        self._rows.append(report.as_row(step))

    def flush(self) -> None:
        if not self._rows:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        write_header = not self.path.exists()
        pd.DataFrame(self._rows, columns=self.COLUMNS).to_csv(
            self.path, mode="a", header=write_header, index=False, lineterminator="\n"
        )
        self._rows.clear()

    def discard(self) -> None:
        self._rows.clear()
