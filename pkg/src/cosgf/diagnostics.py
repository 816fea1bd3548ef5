"""Covariate balance between treated and control arms.

The standardized difference divides the arm mean difference by the pooled
SD ``sqrt((var_t + var_c) / 2)``, an unweighted average of the two sample
variances (n - 1 denominators), binary covariates included.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .aggregates import AggregateTable
from .data import ClusteredDataset
from .errors import OneArmEmpty, ZeroPooledSD

__all__ = ["Level", "BalanceRow", "standardized_difference", "balance_table"]


class Level(str, enum.Enum):
    UNIT = "unit"
    CLUSTER = "cluster"


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    level: Level
    mean_t: float
    mean_c: float
    std_diff: float

    @property
    def defined(self) -> bool:
        return math.isfinite(self.std_diff)


def standardized_difference(treated, control) -> float:
    """(mean_t - mean_c) / sqrt((var_t + var_c) / 2).

    Raises
    ------
    ValueError
        Either sample is empty.
    ZeroPooledSD
        Both samples are constant.
    """
    t = np.asarray(treated, dtype=float)
    c = np.asarray(control, dtype=float)
    if t.size == 0 or c.size == 0:
        raise ValueError("both samples must be non-empty")
    var_t = t.var(ddof=1) if t.size > 1 else 0.0
    var_c = c.var(ddof=1) if c.size > 1 else 0.0
    pooled = math.sqrt((var_t + var_c) / 2.0)
    if pooled == 0.0:
        raise ZeroPooledSD("pooled standard deviation is zero")
    return float((t.mean() - c.mean()) / pooled)


def _row(name, level, t, c) -> BalanceRow:
    try:
        d = standardized_difference(t, c)
    except ZeroPooledSD:
        d = math.nan
    return BalanceRow(name, level, float(np.mean(t)), float(np.mean(c)), d)


def balance_table(
    dataset: ClusteredDataset, aggregates: AggregateTable | None = None
) -> list[BalanceRow]:
    """Balance rows: unit covariates over units, then cluster covariates and
    aggregates over clusters (one observation per cluster).

    Rows whose pooled SD is zero carry ``std_diff = nan``.
    """
    if dataset.one_armed:
        raise OneArmEmpty("balance needs both treated and control clusters")
    unit_t = dataset.unit_treatment == 1
    cluster_t = dataset.a == 1
    rows = [
        _row(name, Level.UNIT, dataset.x[unit_t, k], dataset.x[~unit_t, k])
        for k, name in enumerate(dataset.unit_covariate_names)
    ]
    rows += [
        _row(name, Level.CLUSTER, dataset.w[cluster_t, k], dataset.w[~cluster_t, k])
        for k, name in enumerate(dataset.cluster_covariate_names)
    ]
    if aggregates is not None:
        index = {cid: j for j, cid in enumerate(aggregates.cluster_ids)}
        order = np.array([index[cid] for cid in dataset.cluster_ids], dtype=np.intp)
        values = aggregates.values[order]
        rows += [
            _row(name, Level.CLUSTER, values[cluster_t, k], values[~cluster_t, k])
            for k, name in enumerate(aggregates.names)
        ]
    return rows
