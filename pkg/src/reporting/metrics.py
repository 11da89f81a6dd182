"""
Metrics CSV files and reward-convergence summaries.

A metrics file starts with ``# key: value`` metadata lines (config hash,
reward weights, ablation flags, seeds), followed by a header row and one row
per iteration or step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
import json
import logging
from pathlib import Path
from typing import Any, Sequence, TextIO

import numpy as np

from ..exceptions import CorpusError, DomainError

logger = logging.getLogger(__name__)

RPO_COLUMNS = (
    "iteration",
    "mean_reward",
    "reward_var",
    "r_pg_mean",
    "r_vc_mean",
    "r_rf_mean",
    "kl",
    "clip_fraction",
    "wall_ms",
)
PRETRAIN_COLUMNS = ("step", "t", "loss")


def _format(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class MetricsWriter:
    """Streams rows to a metadata-prefixed CSV file."""

    def __init__(self, path: str | Path, columns: Sequence[str], metadata: dict[str, Any] | None = None, append: bool = False):
        self.path = Path(path)
        self.columns = tuple(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        resume = append and self.path.exists()
        self._file: TextIO = open(self.path, "a" if resume else "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file, lineterminator="\n")
        if not resume:
            for key, value in (metadata or {}).items():
                rendered = json.dumps(value, sort_keys=True) if isinstance(value, (dict, list)) else value
                self._file.write(f"# {key}: {rendered}\n")
            self._writer.writerow(self.columns)
        self.rows_written = 0

    def write(self, row: dict[str, Any]) -> None:
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise DomainError("Metrics row lacks columns", field="row", value=missing)
        self._writer.writerow([_format(row[c]) for c in self.columns])
        self._file.flush()
        self.rows_written += 1

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> MetricsWriter:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


@dataclass
class MetricsTable:
    metadata: dict[str, str]
    columns: list[str]
    rows: list[dict[str, float]]

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=np.float64)


def read_metrics_csv(path: str | Path) -> MetricsTable:
    """Parse a file written by ``MetricsWriter``."""
    path = Path(path)
    if not path.exists():
        raise CorpusError("Metrics file not found", path=str(path))
    metadata: dict[str, str] = {}
    body: list[str] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                metadata[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
    if not body:
        raise CorpusError("Metrics file has no header", path=str(path))
    reader = csv.DictReader(body)
    rows = [{k: float(v) for k, v in row.items()} for row in reader]
    return MetricsTable(metadata=metadata, columns=list(reader.fieldnames or []), rows=rows)


def smoothed(values: Sequence[float], window: int) -> np.ndarray:
    """Trailing moving average; the first entries average what is available."""
    if window < 1:
        raise DomainError("Smoothing window must be positive", field="window", value=window)
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return x
    csum = np.cumsum(np.insert(x, 0, 0.0))
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


@dataclass(frozen=True)
class WindowSummary:
    """First- and last-window reward statistics of a run."""

    window: int
    first_mean: float
    last_mean: float
    first_var: float
    last_var: float

    @property
    def improved(self) -> bool:
        return self.last_mean > self.first_mean

    @property
    def var_ratio(self) -> float:
        return self.last_var / self.first_var if self.first_var > 0.0 else float("inf")

    def as_dict(self) -> dict[str, float]:
        return {
            "window": self.window,
            "first_mean": self.first_mean,
            "last_mean": self.last_mean,
            "first_var": self.first_var,
            "last_var": self.last_var,
            "improved": self.improved,
            "var_ratio": self.var_ratio,
        }


def window_summary(table: MetricsTable, window: int = 20) -> WindowSummary:
    """Mean reward and mean reward variance over the first and last ``window`` iterations."""
    reward = table.column("mean_reward")
    var = table.column("reward_var")
    if reward.size == 0:
        raise DomainError("No metric rows to summarize", field="rows")
    w = min(window, reward.size)
    return WindowSummary(
        window=w,
        first_mean=float(reward[:w].mean()),
        last_mean=float(reward[-w:].mean()),
        first_var=float(var[:w].mean()),
        last_var=float(var[-w:].mean()),
    )
