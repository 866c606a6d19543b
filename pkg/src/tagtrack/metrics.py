"""OSPA multi-object error metric and run-level aggregation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class OspaParams:
    order: float = 1.0
    cutoff: float = 100.0

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("OSPA order must be >= 1")
        if self.cutoff <= 0:
            raise ValueError("OSPA cutoff must be positive")


@dataclass(frozen=True)
class OspaResult:
    total: float
    localization: float
    cardinality: float


def ospa(x, y, params: OspaParams = OspaParams()) -> OspaResult:
    """OSPA distance between two planar point sets with its localization /
    cardinality split; exact optimal assignment."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 2)
    p, c = params.order, params.cutoff
    if len(x) == 0 and len(y) == 0:
        return OspaResult(0.0, 0.0, 0.0)
    if len(x) == 0 or len(y) == 0:
        return OspaResult(c, 0.0, c)
    n = max(len(x), len(y))
    m = min(len(x), len(y))
    d = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2)
    cost = np.minimum(d, c) ** p
    rows, cols = linear_sum_assignment(cost)
    match = float(cost[rows, cols].sum())
    total = ((match + c ** p * (n - m)) / n) ** (1.0 / p)
    loc = (match / n) ** (1.0 / p)
    card = (c ** p * (n - m) / n) ** (1.0 / p)
    return OspaResult(float(total), float(loc), float(card))


@dataclass
class RunStats:
    mean: np.ndarray
    q05: np.ndarray
    q95: np.ndarray
    overall_mean: float


def aggregate_runs(series) -> RunStats:
    """Pointwise mean and 5/95 quantiles over equal-length per-step series."""
    series = [np.asarray(s, dtype=np.float64) for s in series]
    if not series:
        raise ValueError("no runs to aggregate")
    lengths = {len(s) for s in series}
    if len(lengths) != 1:
        raise ValueError(f"runs have unequal lengths {sorted(lengths)}")
    stack = np.vstack(series)
    return RunStats(stack.mean(axis=0),
                    np.quantile(stack, 0.05, axis=0),
                    np.quantile(stack, 0.95, axis=0),
                    float(stack.mean()))
