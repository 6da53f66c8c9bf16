"""Convergence metrics: filter MSE, cross-environment aggregation, thresholds."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .estimation import FilterSet


@dataclass(frozen=True)
class ConvergenceSeries:
    """Per-iteration filter error of one run, index 0 = initial state."""
    values: np.ndarray
    algorithm: str
    pruning: str
    c_target: float
    c_achieved: float
    environment_id: int
    seed: int


@dataclass(frozen=True)
class AggregateSeries:
    """Per-iteration geometric mean of one grid cell across environments."""
    values: np.ndarray
    n_environments: int
    algorithm: str
    pruning: str
    c_target: float


def mse_w(filters: FilterSet, centralized: FilterSet) -> float:
    """Mean squared Frobenius distance between two network-wide filter sets."""
    if len(filters) != len(centralized):
        raise ValueError("filter sets have different node counts")
    total = 0.0
    for w, w_hat in zip(filters.filters, centralized.filters):
        if w.shape != w_hat.shape:
            raise ValueError(f"filter shape mismatch: {w.shape} vs {w_hat.shape}")
        total += float(np.linalg.norm(w - w_hat, "fro") ** 2)
    return total / len(filters)


def geometric_mean(
    series: Sequence[ConvergenceSeries],
    clamp: float | None = None,
) -> AggregateSeries:
    """Per-iteration geometric mean over environments, in the log domain.

    Values must be strictly positive; pass clamp to floor near-zero entries
    instead of raising (converged runs can hit exact zero error).
    """
    if not series:
        raise ValueError("geometric_mean needs at least one series")
    lengths = {len(s.values) for s in series}
    if len(lengths) != 1:
        raise ValueError(f"member series lengths differ: {sorted(lengths)}")
    stacked = np.vstack([np.asarray(s.values, dtype=float) for s in series])
    if clamp is not None:
        stacked = np.maximum(stacked, clamp)
    if (stacked <= 0).any():
        raise ValueError("geometric mean undefined for non-positive values")
    values = np.exp(np.mean(np.log(stacked), axis=0))
    first = series[0]
    return AggregateSeries(
        values=values,
        n_environments=len(series),
        algorithm=first.algorithm,
        pruning=first.pruning,
        c_target=first.c_target,
    )


def iterations_to_threshold(
    series: ConvergenceSeries | AggregateSeries | np.ndarray,
    ratio: float,
) -> int | None:
    """Smallest iteration whose value drops to ratio times the initial value,
    or None if the series never gets there."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    values = np.asarray(getattr(series, "values", series), dtype=float)
    hits = np.flatnonzero(values <= ratio * values[0])
    return int(hits[0]) if hits.size else None
