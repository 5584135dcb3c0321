"""Per-episode metrics: a fixed, versioned CSV schema with lossless float
round-trip (floats are written with `repr`, which shortest-round-trips in
Python 3).

Columns, in order: episode, return_mean, return_trailing100, one
intrinsic_mean_agent_<i> per agent, one ci_pair_<i>_<j> per ordered agent
pair, seconds. `seconds` is wall-clock time and is the only column excluded
from reproducibility comparisons.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .influence import ordered_pairs

__all__ = ["SCHEMA_VERSION", "RunRecord", "MetricsWriter", "metric_columns",
           "load_metrics", "records_equal"]

SCHEMA_VERSION = 1


def metric_columns(n_agents: int) -> list:
    cols = ["episode", "return_mean", "return_trailing100"]
    cols += [f"intrinsic_mean_agent_{i}" for i in range(n_agents)]
    cols += [f"ci_pair_{i}_{j}" for i, j in ordered_pairs(n_agents)]
    cols.append("seconds")
    return cols


@dataclass
class RunRecord:
    """One episode's logged quantities.

    `intrinsic_mean` holds the per-agent mean alpha-scaled intrinsic reward
    over this episode's updates; `pair_influence` the mean clamped influence
    value per ordered pair. Both are zero whenever no update ran.
    """

    episode: int
    return_mean: float
    return_trailing100: float
    intrinsic_mean: tuple
    pair_influence: tuple
    seconds: float

    def row(self) -> list:
        return [self.episode, self.return_mean, self.return_trailing100,
                *self.intrinsic_mean, *self.pair_influence, self.seconds]


class MetricsWriter:
    """Streaming CSV writer; one flushed row per episode."""

    def __init__(self, path: str, n_agents: int):
        self.path = path
        self.columns = metric_columns(n_agents)
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._fh.write(f"# schema={SCHEMA_VERSION}\n")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(self.columns)
        self._fh.flush()

    def write(self, record: RunRecord):
        row = record.row()
        if len(row) != len(self.columns):
            raise ValueError(f"record has {len(row)} fields, schema wants "
                             f"{len(self.columns)}")
        self._writer.writerow([str(row[0])] + [repr(float(v)) for v in row[1:]])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_metrics(path: str) -> dict:
    """Read a metrics CSV into {column: list}; floats parse exactly."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema="):
            raise ValueError(f"{path}: missing schema marker")
        version = int(first.split("=", 1)[1])
        if version != SCHEMA_VERSION:
            raise ValueError(f"{path}: schema {version} unsupported")
        reader = csv.reader(fh)
        header = next(reader)
        data = {col: [] for col in header}
        for row in reader:
            for col, value in zip(header, row):
                data[col].append(int(value) if col == "episode" else float(value))
    return data


def records_equal(path_a: str, path_b: str, ignore=("seconds",)) -> bool:
    """Column-wise exact equality of two metrics files, skipping `ignore`."""
    a = load_metrics(path_a)
    b = load_metrics(path_b)
    if set(a) != set(b):
        return False
    for col in a:
        if col in ignore:
            continue
        if len(a[col]) != len(b[col]) or np.any(np.asarray(a[col]) != np.asarray(b[col])):
            return False
    return True
