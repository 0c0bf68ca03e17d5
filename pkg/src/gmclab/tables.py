"""Tabular results and byte-reproducible CSV output.

CSV dialect: comma separated, '.' decimal point, LF line endings, one header
row, floats at 17 significant digits.  Metadata rides along as leading
``# key=value`` comment lines; nothing time-dependent is ever written into
a table body, so re-running with one seed reproduces files byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError

__all__ = ["ExperimentTable", "MomentEstimate", "batch_means_stderr",
           "format_value", "config_hash"]


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    xf = float(x)
    if math.isnan(xf):
        return "nan"
    if math.isinf(xf):
        return "inf" if xf > 0 else "-inf"
    return format(xf, ".17g")


def config_hash(params: dict) -> str:
    """Stable digest of a JSON-able parameter record."""
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"),
                      default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ExperimentTable:
    """Rectangular named-column table with deterministic row order."""

    columns: tuple[str, ...]
    rows: list[tuple]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = tuple(self.columns)
        width = len(self.columns)
        for r in self.rows:
            if len(r) != width:
                raise PreconditionError(
                    f"row width {len(r)} != column count {width}")

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.columns.index(name)
        except ValueError:
            raise PreconditionError(f"no column {name!r}") from None
        return np.array([row[idx] for row in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        lines = []
        for key in sorted(self.meta):
            lines.append(f"# {key}={json.dumps(self.meta[key], default=str)}")
        lines.append(",".join(self.columns))
        for row in self.rows:
            lines.append(",".join(format_value(v) for v in row))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def batch_means_stderr(samples: np.ndarray, n_batches: int = 30) -> float:
    """Standard error of the mean by batch means (default 30 batches)."""
    samples = np.asarray(samples, float)
    n = samples.size
    if n < n_batches:
        return float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    cut = (n // n_batches) * n_batches
    batches = samples[:cut].reshape(n_batches, -1).mean(axis=1)
    return float(batches.std(ddof=1) / math.sqrt(n_batches))


@dataclass(frozen=True)
class MomentEstimate:
    p: float
    mean: float
    stderr: float
    trials: int

    @property
    def ci95(self) -> tuple[float, float]:
        half = 1.959963984540054 * self.stderr
        return (self.mean - half, self.mean + half)
