"""Core records for clustered observational data.

Units (outcome, unit covariates, cluster membership) and clusters (treatment,
cluster covariates) are validated once and stored column-wise in a
:class:`ClusteredDataset`, which every downstream routine treats as read-only.
"""
from __future__ import annotations

import enum
import math
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DanglingClusterRef,
    DuplicateClusterId,
    EmptyCluster,
    InconsistentSchema,
    IngestionError,
    InvalidValue,
)

__all__ = [
    "Kind",
    "Covariate",
    "Unit",
    "Cluster",
    "ClusteredDataset",
    "build_dataset",
    "arm_partition",
    "infer_kind",
]


class Kind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: Kind


@dataclass(frozen=True)
class Unit:
    unit_id: str
    cluster_id: str
    outcome: float
    covariates: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Cluster:
    cluster_id: str
    treatment: int
    covariates: Mapping[str, float] = field(default_factory=dict)


def infer_kind(values: np.ndarray) -> Kind:
    """Binary iff every observed value is 0 or 1."""
    values = np.asarray(values, dtype=float)
    if values.size and np.all((values == 0.0) | (values == 1.0)):
        return Kind.BINARY
    return Kind.CONTINUOUS


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


class ClusteredDataset:
    """Validated, immutable unit/cluster data in columnar form.

    Parameters
    ----------
    unit_ids : sequence of str
    unit_cluster : array of int, shape (n,)
        Index into ``cluster_ids`` for every unit.
    y : array, shape (n,)
    x : array, shape (n, p)
        Unit covariates, columns named by ``unit_covariates``.
    cluster_ids : sequence of str
    a : array of {0, 1}, shape (m,)
    w : array, shape (m, q)
        Cluster covariates, columns named by ``cluster_covariates``.
    unit_covariates, cluster_covariates : sequence of str or Covariate
        Plain names get their kind inferred from the data.

    Raises
    ------
    DuplicateClusterId, DanglingClusterRef, EmptyCluster, InconsistentSchema,
    InvalidValue
    """

    __slots__ = (
        "unit_ids",
        "unit_cluster",
        "y",
        "x",
        "cluster_ids",
        "a",
        "w",
        "unit_covariates",
        "cluster_covariates",
        "_cluster_sizes",
    )

    def __init__(
        self,
        unit_ids: Sequence[str],
        unit_cluster,
        y,
        x,
        cluster_ids: Sequence[str],
        a,
        w,
        unit_covariates: Sequence[str | Covariate] = (),
        cluster_covariates: Sequence[str | Covariate] = (),
    ):
        unit_ids = tuple(map(str, unit_ids))
        cluster_ids = tuple(map(str, cluster_ids))
        n, m = len(unit_ids), len(cluster_ids)
        if n == 0 or m == 0:
            raise IngestionError("dataset needs at least one unit and one cluster")
        if len(set(cluster_ids)) != m:
            dup = next(c for c, k in Counter(cluster_ids).items() if k > 1)
            raise DuplicateClusterId(f"cluster id {dup!r} appears more than once")
        if len(set(unit_ids)) != n:
            raise IngestionError("unit ids must be unique")

        unit_cluster = np.asarray(unit_cluster)
        if unit_cluster.shape != (n,) or not np.issubdtype(unit_cluster.dtype, np.integer):
            raise InconsistentSchema("unit_cluster must be an integer vector of length n")
        if n and (unit_cluster.min() < 0 or unit_cluster.max() >= m):
            raise DanglingClusterRef("unit refers to a cluster index outside the cluster table")

        y = np.asarray(y, dtype=float)
        if y.shape != (n,):
            raise InconsistentSchema(f"outcome has shape {y.shape}, expected ({n},)")
        x = np.asarray(x, dtype=float).reshape(n, -1) if np.size(x) else np.empty((n, 0))
        w = np.asarray(w, dtype=float).reshape(m, -1) if np.size(w) else np.empty((m, 0))
        a = np.asarray(a)
        if a.shape != (m,):
            raise InconsistentSchema(f"treatment has shape {a.shape}, expected ({m},)")
        if not np.all((a == 0) | (a == 1)):
            raise InvalidValue("treatment must be 0 or 1")
        for label, arr in (("outcome", y), ("unit covariate", x), ("cluster covariate", w)):
            if not np.all(np.isfinite(arr)):
                raise InvalidValue(f"non-finite {label} value")

        unit_schema = _resolve_schema(unit_covariates, x, "unit")
        cluster_schema = _resolve_schema(cluster_covariates, w, "cluster")
        names = [c.name for c in unit_schema] + [c.name for c in cluster_schema]
        if len(set(names)) != len(names):
            raise InconsistentSchema("covariate names must be unique across units and clusters")

        sizes = np.bincount(unit_cluster, minlength=m)
        if np.any(sizes == 0):
            empty = cluster_ids[int(np.flatnonzero(sizes == 0)[0])]
            raise EmptyCluster(f"cluster {empty!r} has no units")

        self.unit_ids = unit_ids
        self.unit_cluster = _frozen(unit_cluster, np.intp)
        self.y = _frozen(y, float)
        self.x = _frozen(x, float)
        self.cluster_ids = cluster_ids
        self.a = _frozen(a, np.int8)
        self.w = _frozen(w, float)
        self.unit_covariates = unit_schema
        self.cluster_covariates = cluster_schema
        self._cluster_sizes = _frozen(sizes, np.intp)

    def __setattr__(self, name, value):
        if hasattr(self, "_cluster_sizes"):
            raise AttributeError("ClusteredDataset is immutable")
        object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return len(self.unit_ids)

    @property
    def m(self) -> int:
        return len(self.cluster_ids)

    @property
    def cluster_sizes(self) -> np.ndarray:
        return self._cluster_sizes

    @property
    def unit_treatment(self) -> np.ndarray:
        """A_{J_i} for every unit."""
        return self.a[self.unit_cluster]

    @property
    def one_armed(self) -> bool:
        """True when every cluster shares one treatment level (estimation will fail)."""
        return bool(self.a.min() == self.a.max())

    @property
    def unit_covariate_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.unit_covariates)

    @property
    def cluster_covariate_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.cluster_covariates)

    def units(self) -> list[Unit]:
        names = self.unit_covariate_names
        return [
            Unit(
                uid,
                self.cluster_ids[j],
                float(self.y[i]),
                dict(zip(names, map(float, self.x[i]))),
            )
            for i, (uid, j) in enumerate(zip(self.unit_ids, self.unit_cluster))
        ]

    def clusters(self) -> list[Cluster]:
        names = self.cluster_covariate_names
        return [
            Cluster(cid, int(self.a[j]), dict(zip(names, map(float, self.w[j]))))
            for j, cid in enumerate(self.cluster_ids)
        ]

    def with_outcome(self, y) -> ClusteredDataset:
        return ClusteredDataset(
            self.unit_ids, self.unit_cluster, y, self.x, self.cluster_ids, self.a, self.w,
            self.unit_covariates, self.cluster_covariates,
        )

    def with_treatment(self, a) -> ClusteredDataset:
        return ClusteredDataset(
            self.unit_ids, self.unit_cluster, self.y, self.x, self.cluster_ids, a, self.w,
            self.unit_covariates, self.cluster_covariates,
        )

    def __eq__(self, other):
        if not isinstance(other, ClusteredDataset):
            return NotImplemented
        return (
            self.unit_ids == other.unit_ids
            and self.cluster_ids == other.cluster_ids
            and self.unit_covariates == other.unit_covariates
            and self.cluster_covariates == other.cluster_covariates
            and np.array_equal(self.unit_cluster, other.unit_cluster)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.w, other.w)
        )

    __hash__ = None

    def __repr__(self):
        treated = int(self.a.sum())
        return (
            f"ClusteredDataset(n={self.n}, m={self.m}, treated_clusters={treated}, "
            f"unit_covariates={list(self.unit_covariate_names)}, "
            f"cluster_covariates={list(self.cluster_covariate_names)})"
        )


def _resolve_schema(spec, values: np.ndarray, level: str) -> tuple[Covariate, ...]:
    spec = list(spec)
    if len(spec) != values.shape[1]:
        raise InconsistentSchema(
            f"{level} covariate schema has {len(spec)} names but data has {values.shape[1]} columns"
        )
    out = []
    for col, item in enumerate(spec):
        if isinstance(item, Covariate):
            out.append(item)
        else:
            out.append(Covariate(str(item), infer_kind(values[:, col])))
    return tuple(out)


def _as_float(value, what: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise InvalidValue(f"{what}: {value!r} is not a number") from None
    if not math.isfinite(out):
        raise InvalidValue(f"{what}: {value!r} is not finite")
    return out


def build_dataset(units: Sequence[Unit], clusters: Sequence[Cluster]) -> ClusteredDataset:
    """Validate unit and cluster records and assemble a dataset.

    Covariate kinds are inferred (binary iff all values are 0/1). A dataset
    whose clusters all share one treatment level is accepted; check
    :attr:`ClusteredDataset.one_armed` before estimating.
    """
    if not units or not clusters:
        raise IngestionError("units and clusters must be non-empty")

    cluster_ids = [c.cluster_id for c in clusters]
    index: dict[str, int] = {}
    for j, cid in enumerate(cluster_ids):
        if cid in index:
            raise DuplicateClusterId(f"cluster id {cid!r} appears more than once")
        index[cid] = j

    w_names = list(clusters[0].covariates)
    for c in clusters:
        if set(c.covariates) != set(w_names):
            raise InconsistentSchema(f"cluster {c.cluster_id!r} has covariates {sorted(c.covariates)}")
    x_names = list(units[0].covariates)
    for u in units:
        if set(u.covariates) != set(x_names):
            raise InconsistentSchema(f"unit {u.unit_id!r} has covariates {sorted(u.covariates)}")

    unit_cluster = np.empty(len(units), dtype=np.intp)
    for i, u in enumerate(units):
        try:
            unit_cluster[i] = index[u.cluster_id]
        except KeyError:
            raise DanglingClusterRef(
                f"unit {u.unit_id!r} refers to unknown cluster {u.cluster_id!r}"
            ) from None

    a = []
    for c in clusters:
        t = _as_float(c.treatment, f"treatment of cluster {c.cluster_id!r}")
        if t not in (0.0, 1.0):
            raise InvalidValue(f"treatment of cluster {c.cluster_id!r} must be 0 or 1, got {c.treatment!r}")
        a.append(int(t))

    y = [_as_float(u.outcome, f"outcome of unit {u.unit_id!r}") for u in units]
    x = [[_as_float(u.covariates[k], f"{k} of unit {u.unit_id!r}") for k in x_names] for u in units]
    w = [[_as_float(c.covariates[k], f"{k} of cluster {c.cluster_id!r}") for k in w_names] for c in clusters]

    return ClusteredDataset(
        [u.unit_id for u in units],
        unit_cluster,
        y,
        np.array(x, dtype=float).reshape(len(units), len(x_names)),
        cluster_ids,
        a,
        np.array(w, dtype=float).reshape(len(clusters), len(w_names)),
        x_names,
        w_names,
    )


def arm_partition(dataset: ClusteredDataset) -> tuple[np.ndarray, np.ndarray]:
    """Indices of units in treated clusters and in control clusters."""
    treated = dataset.unit_treatment == 1
    return np.flatnonzero(treated), np.flatnonzero(~treated)
