"""Cluster-level summaries of unit covariates.

Each cluster gets quantiles of its continuous unit covariates and means of
its binary ones, computed over all of its units (the focal unit included).
Units then inherit their own cluster's row as regressors.
"""
from __future__ import annotations

import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .data import ClusteredDataset, Kind
from .errors import BadQuantileLevel, MissingClusterRow

__all__ = [
    "AggregateSpec",
    "AggregateTable",
    "compute_aggregates",
    "attach_aggregates",
    "quantile_name",
    "parse_statistic",
]

DEFAULT_LEVELS = (0.25, 0.50, 0.75)
_Q_TOKEN = re.compile(r"^q(\d+(?:\.\d+)?)$")


def quantile_name(level: float) -> str:
    return f"q{100 * level:g}"


def parse_statistic(token: str) -> float | str:
    """Turn ``"q25"`` into ``0.25``; ``"mean"`` passes through."""
    token = token.strip().lower()
    if token == "mean":
        return "mean"
    if token == "median":
        return 0.5
    match = _Q_TOKEN.match(token)
    if not match:
        raise BadQuantileLevel(f"unknown aggregate {token!r}; use 'mean' or 'q<percent>'")
    return float(match.group(1)) / 100.0


def _check_levels(levels: Sequence[float]) -> tuple[float, ...]:
    levels = tuple(float(q) for q in levels)
    if any(not 0.0 < q < 1.0 for q in levels):
        raise BadQuantileLevel(f"quantile levels must lie strictly inside (0, 1): {levels}")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise BadQuantileLevel(f"quantile levels must be sorted and distinct: {levels}")
    return levels


@dataclass(frozen=True)
class AggregateSpec:
    """Which summaries to compute for each unit covariate.

    Continuous covariates default to ``levels`` quantiles, binary ones to the
    mean. ``overrides`` maps a covariate name to an explicit list of
    statistics, e.g. ``{"x1": ["q25", "q50", "q75"], "x2": ["mean"]}``.
    ``quantile_method`` is any ``numpy.quantile`` method; ``"linear"`` is the
    usual (k-1)/(n-1) plotting-position rule.
    """

    levels: tuple[float, ...] = DEFAULT_LEVELS
    overrides: Mapping[str, Sequence[str | float]] = field(default_factory=dict)
    quantile_method: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "levels", _check_levels(self.levels))
        resolved = {}
        for name, stats in self.overrides.items():
            parsed = [parse_statistic(s) if isinstance(s, str) else float(s) for s in stats]
            qs = [s for s in parsed if s != "mean"]
            _check_levels(qs)
            resolved[name] = tuple(parsed)
        object.__setattr__(self, "overrides", resolved)

    def rules(self, dataset: ClusteredDataset) -> list[tuple[int, str, float | str]]:
        """(unit-covariate column, aggregate name, level or "mean") in output order."""
        unknown = set(self.overrides) - set(dataset.unit_covariate_names)
        if unknown:
            raise BadQuantileLevel(f"aggregate override names unknown covariates: {sorted(unknown)}")
        out = []
        for col, cov in enumerate(dataset.unit_covariates):
            if cov.name in self.overrides:
                stats = self.overrides[cov.name]
            elif cov.kind is Kind.BINARY:
                stats = ("mean",)
            else:
                stats = self.levels
            for s in stats:
                label = "mean" if s == "mean" else quantile_name(s)
                out.append((col, f"{cov.name}_{label}", s))
        return out


@dataclass(frozen=True)
class AggregateTable:
    """One row of aggregate values per cluster, aligned with ``cluster_ids``."""

    cluster_ids: tuple[str, ...]
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True).reshape(len(self.cluster_ids), len(self.names))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def row(self, cluster_id: str) -> dict[str, float]:
        try:
            j = self.cluster_ids.index(cluster_id)
        except ValueError:
            raise MissingClusterRow(f"no aggregate row for cluster {cluster_id!r}") from None
        return dict(zip(self.names, map(float, self.values[j])))

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def _grouped_linear_quantiles(values, groups, sizes, levels) -> np.ndarray:
    """Type-7 quantiles of ``values`` within each group, without a Python loop."""
    order = np.lexsort((values, groups))
    sorted_vals = values[order]
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    out = np.empty((len(sizes), len(levels)))
    for k, q in enumerate(levels):
        pos = (sizes - 1) * q
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, sizes - 1)
        frac = pos - lo
        v_lo = sorted_vals[starts + lo]
        v_hi = sorted_vals[starts + hi]
        out[:, k] = v_lo + frac * (v_hi - v_lo)
    return out


def compute_aggregates(
    dataset: ClusteredDataset, spec: AggregateSpec | None = None
) -> AggregateTable:
    """Compute every configured aggregate for every cluster."""
    spec = spec or AggregateSpec()
    rules = spec.rules(dataset)
    sizes = dataset.cluster_sizes
    groups = dataset.unit_cluster
    values = np.empty((dataset.m, len(rules)))

    by_col: dict[int, list[int]] = {}
    for k, (col, _, stat) in enumerate(rules):
        by_col.setdefault(col, []).append(k)
    for col, ks in by_col.items():
        x = dataset.x[:, col]
        q_ks = [k for k in ks if rules[k][2] != "mean"]
        for k in ks:
            if rules[k][2] == "mean":
                values[:, k] = np.bincount(groups, weights=x, minlength=dataset.m) / sizes
        if not q_ks:
            continue
        levels = [rules[k][2] for k in q_ks]
        if spec.quantile_method == "linear":
            values[:, q_ks] = _grouped_linear_quantiles(x, groups, sizes, levels)
        else:
            for j in range(dataset.m):
                values[j, q_ks] = np.quantile(x[groups == j], levels, method=spec.quantile_method)

    return AggregateTable(dataset.cluster_ids, tuple(r[1] for r in rules), values)


def attach_aggregates(dataset: ClusteredDataset, table: AggregateTable) -> np.ndarray:
    """Unit-level aggregate columns: row i is the table row of unit i's cluster."""
    if table.cluster_ids == dataset.cluster_ids:
        return table.values[dataset.unit_cluster]
    index = {cid: j for j, cid in enumerate(table.cluster_ids)}
    missing = [cid for cid in dataset.cluster_ids if cid not in index]
    if missing:
        raise MissingClusterRow(f"aggregate table has no row for cluster {missing[0]!r}")
    remap = np.array([index[cid] for cid in dataset.cluster_ids], dtype=np.intp)
    return table.values[remap[dataset.unit_cluster]]
