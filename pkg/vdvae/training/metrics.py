"""Per-step training metrics and their CSV form."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BASE_COLUMNS = ["step", "applied", "loss_nats", "loss_bpd", "grad_norm", "skipped"]


@dataclass(frozen=True)
class StepRecord:
    """Immutable record of one training batch."""
    step: int
    applied: int  # applied updates so far, including this one
    loss_nats: float
    loss_bpd: float
    grad_norm: float
    skipped: bool
    kl_per_layer: tuple[float, ...] = ()

    def to_row(self) -> list[str]:
        return [
            str(self.step),
            str(self.applied),
            repr(float(self.loss_nats)),
            repr(float(self.loss_bpd)),
            repr(float(self.grad_norm)),
            "1" if self.skipped else "0",
            *(repr(float(k)) for k in self.kl_per_layer),
        ]

    @classmethod
    def from_row(cls, row: dict) -> StepRecord:
        n_layers = sum(1 for key in row if key.startswith("kl_layer_"))
        return cls(
            step=int(row["step"]),
            applied=int(row["applied"]),
            loss_nats=float(row["loss_nats"]),
            loss_bpd=float(row["loss_bpd"]),
            grad_norm=float(row["grad_norm"]),
            skipped=row["skipped"] == "1",
            kl_per_layer=tuple(float(row[f"kl_layer_{i}"]) for i in range(n_layers)),
        )


def header(n_layers: int) -> list[str]:
    return BASE_COLUMNS + [f"kl_layer_{i}" for i in range(n_layers)]


@dataclass
class MetricsLog:
    """Ordered step records for one run."""
    n_layers: int
    records: list[StepRecord] = field(default_factory=list)

    def append(self, record: StepRecord) -> StepRecord:
        self.records.append(record)
        return record

    def __len__(self) -> int:
        return len(self.records)

    def truncate(self, step: int) -> None:
        """Drop records at or after `step` (used when resuming)."""
        self.records = [r for r in self.records if r.step < step]

    @property
    def skipped(self) -> list[StepRecord]:
        return [r for r in self.records if r.skipped]

    @property
    def skip_fraction(self) -> float:
        return len(self.skipped) / len(self.records) if self.records else 0.0

    def losses(self) -> np.ndarray:
        return np.array([r.loss_nats for r in self.records], dtype=np.float64)

    def smoothed_loss(self, window: int = 100) -> np.ndarray:
        """Trailing-window mean of applied-step losses."""
        losses = np.array([r.loss_nats for r in self.records if not r.skipped], dtype=np.float64)
        if losses.size < window:
            return np.array([], dtype=np.float64)
        kernel = np.ones(window) / window
        return np.convolve(losses, kernel, mode="valid")

    def max_grad_norm_per_window(self, window: int = 500) -> list[tuple[int, float]]:
        """(first step, max grad norm) for each window of steps."""
        out = []
        for start in range(0, len(self.records), window):
            chunk = self.records[start:start + window]
            out.append((chunk[0].step, max(r.grad_norm for r in chunk)))
        return out

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header(self.n_layers))
            for record in self.records:
                writer.writerow(record.to_row())

    @classmethod
    def read_csv(cls, path: str | Path) -> MetricsLog:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            n_layers = sum(1 for name in (reader.fieldnames or []) if name.startswith("kl_layer_"))
            records = [StepRecord.from_row(row) for row in reader]
        return cls(n_layers=n_layers, records=records)
