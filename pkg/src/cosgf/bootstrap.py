"""Cluster block bootstrap for the g-formula estimate.

A replicate draws m clusters with replacement and carries every unit of each
drawn cluster. Replicates missing an arm are discarded and redrawn, up to
``10 * B`` draws in total.

Two evaluation routes give the same replicate values:

``"fast"`` (default)
    Clusters stay intact, so a replicate only changes how many copies of each
    cluster enter each arm fit. Per-cluster cross-product blocks are formed
    once in coordinates whitened by the full-arm SVD, and a replicate is a
    count-weighted sum of blocks followed by a small symmetric solve.
    Replicates whose whitened system is numerically singular are refit from
    explicit rows with the minimum-norm SVD solver.
``"resample"``
    Materialize every replicate dataset with fresh cluster ids, recompute its
    aggregates, and rerun :func:`~cosgf.estimators.g_formula`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aggregates import AggregateSpec, AggregateTable, compute_aggregates
from .data import ClusteredDataset
from .errors import OneArmEmpty, TooManyDegenerateReplicates
from .estimators import RCOND, Design, ModelSpec, build_design, g_formula_fit, least_squares
from .rng import SeedLike, make_rng

__all__ = [
    "BootstrapResult",
    "ClusterDraws",
    "draw_clusters",
    "resample_clusters",
    "block_bootstrap",
    "replicate_estimates",
    "summarize",
]

Z_975 = 1.959963984540054
ATTEMPT_FACTOR = 10
# eigenvalue ratio below which a whitened replicate system goes to the exact
# refit; rounding noise in the eigenvalues is ~1e-16, so stay well above it
GRAM_TOL = 1e-10


@dataclass(frozen=True)
class BootstrapResult:
    estimate: float
    replicates: np.ndarray
    requested: int
    discarded: int
    se: float
    wald_ci: tuple[float, float]
    percentile_ci: tuple[float, float]
    rank_deficient: int = 0
    estimate_rank_deficient: bool = False

    @property
    def attempts(self) -> int:
        return len(self.replicates) + self.discarded

    def as_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "se": self.se,
            "ci_wald_lo": self.wald_ci[0],
            "ci_wald_hi": self.wald_ci[1],
            "ci_percentile_lo": self.percentile_ci[0],
            "ci_percentile_hi": self.percentile_ci[1],
            "bootstrap": self.requested,
            "discarded": self.discarded,
            "rank_deficient_replicates": self.rank_deficient,
            "rank_deficient_estimate": self.estimate_rank_deficient,
        }


@dataclass(frozen=True)
class ClusterDraws:
    """Accepted cluster draws: ``indices[b]`` lists the m clusters of replicate b."""

    indices: np.ndarray
    discarded: int

    @property
    def counts(self) -> np.ndarray:
        """(B, m) multiplicity of every original cluster in every replicate."""
        b, m = self.indices.shape
        flat = self.indices + m * np.arange(b)[:, None]
        return np.bincount(flat.ravel(), minlength=b * m).reshape(b, m)


def draw_clusters(a: np.ndarray, B: int, rng: np.random.Generator) -> ClusterDraws:
    """Draw ``B`` two-armed cluster resamples, rejecting one-armed draws."""
    a = np.asarray(a)
    m = a.shape[0]
    cap = ATTEMPT_FACTOR * B
    kept: list[np.ndarray] = []
    have = attempts = 0
    while have < B:
        batch = min(B - have, cap - attempts)
        if batch <= 0:
            raise TooManyDegenerateReplicates(
                f"only {have} of {B} resamples contained both arms after {attempts} draws; "
                f"the design ({int(a.sum())} treated of {m} clusters) cannot support a block bootstrap"
            )
        idx = rng.integers(0, m, size=(batch, m))
        attempts += batch
        arms = a[idx]
        ok = arms.any(axis=1) & (~arms.astype(bool)).any(axis=1)
        kept.append(idx[ok])
        have += int(ok.sum())
    indices = np.concatenate(kept)[:B] if kept else np.empty((0, m), dtype=np.int64)
    return ClusterDraws(indices, attempts - B)


def _resample_from_indices(dataset: ClusteredDataset, picks: np.ndarray) -> ClusteredDataset:
    order = np.argsort(dataset.unit_cluster, kind="stable")
    starts = np.concatenate(([0], np.cumsum(dataset.cluster_sizes)))
    rows = np.concatenate([order[starts[j]: starts[j + 1]] for j in picks])
    sizes = dataset.cluster_sizes[picks]
    new_cluster = np.repeat(np.arange(len(picks)), sizes)
    cluster_ids = [f"{dataset.cluster_ids[j]}#{k + 1}" for k, j in enumerate(picks)]
    unit_ids = [f"{dataset.unit_ids[i]}#{k + 1}" for k, i in zip(new_cluster, rows)]
    return ClusteredDataset(
        unit_ids,
        new_cluster,
        dataset.y[rows],
        dataset.x[rows],
        cluster_ids,
        dataset.a[picks],
        dataset.w[picks],
        dataset.unit_covariates,
        dataset.cluster_covariates,
    )


def resample_clusters(dataset: ClusteredDataset, seed: SeedLike) -> ClusteredDataset:
    """One block-bootstrap resample with relabeled clusters.

    Copies of the same original cluster get distinct ids ``<id>#<k>`` (k is
    the draw position), so aggregates and fits treat them as separate
    clusters. The arm check is not applied here.
    """
    rng = make_rng(seed)
    picks = rng.integers(0, dataset.m, size=dataset.m)
    return _resample_from_indices(dataset, picks)


class _ArmBlocks:
    """Per-cluster cross-products for one arm in whitened coordinates."""

    def __init__(self, design: Design, clusters: np.ndarray, in_arm: np.ndarray, m: int):
        rows = np.flatnonzero(in_arm)
        rows = rows[np.argsort(clusters[rows], kind="stable")]
        x = design.matrix[rows]
        y = design.response[rows]
        g = clusters[rows]
        _, s, vt = np.linalg.svd(x, full_matrices=False)
        r = int((s > RCOND * s[0]).sum()) if s.size and s[0] > 0 else 0
        self.transform = vt[:r].T / s[:r]
        z = x @ self.transform
        present, starts = np.unique(g, return_index=True)
        self.gram = np.zeros((m, r, r))
        self.gram[present] = np.add.reduceat(z[:, :, None] * z[:, None, :], starts, axis=0)
        self.cross = np.zeros((m, r))
        self.cross[present] = np.add.reduceat(z * y[:, None], starts, axis=0)
        self.full_rank = r == x.shape[1]

    def solve(self, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients for each count row, plus a mask of singular replicates."""
        gram = np.einsum("bj,jkl->bkl", counts, self.gram)
        cross = counts @ self.cross
        eig = np.linalg.eigvalsh(gram)
        singular = ~(eig[:, 0] > GRAM_TOL * eig[:, -1])
        if not self.full_rank:
            singular[:] = True
        safe = np.where(singular[:, None, None], np.eye(gram.shape[1]), gram)
        gamma = np.linalg.solve(safe, cross[:, :, None])[:, :, 0]
        return gamma @ self.transform.T, singular


def _fast_replicates(dataset, design: Design, counts: np.ndarray) -> tuple[np.ndarray, int]:
    counts = counts.astype(float)
    treated_cluster = dataset.a == 1
    unit_arm = dataset.unit_treatment
    g = dataset.unit_cluster
    membership = np.zeros((dataset.m, dataset.n))
    membership[g, np.arange(dataset.n)] = 1.0
    arms = {}
    for arm, mask in ((1, treated_cluster), (0, ~treated_cluster)):
        blocks = _ArmBlocks(design, g, unit_arm == arm, dataset.m)
        arm_counts = counts * mask
        beta, singular = blocks.solve(arm_counts)
        arms[arm] = (beta, singular, arm_counts)

    col_sums = membership @ design.matrix
    xbar = (counts @ col_sums) / (counts @ dataset.cluster_sizes)[:, None]

    redo = arms[1][1] | arms[0][1]
    deficient = 0
    for b in np.flatnonzero(redo):
        flagged = False
        for arm in (1, 0):
            rows = np.repeat(np.arange(dataset.n), arms[arm][2][b][g].astype(np.intp))
            fit = least_squares(design.matrix[rows], design.response[rows])
            arms[arm][0][b] = fit.coef
            flagged |= fit.deficient
        deficient += flagged
    taus = np.einsum("bk,bk->b", xbar, arms[1][0] - arms[0][0])
    return taus, deficient


def replicate_estimates(
    dataset: ClusteredDataset,
    spec: ModelSpec,
    draws: ClusterDraws,
    aggregates: AggregateTable | None = None,
    aggregate_spec: AggregateSpec | None = None,
    method: str = "fast",
) -> tuple[np.ndarray, int]:
    """g-formula value of every accepted resample and the rank-deficient count."""
    needs_h = spec.adjustment.uses_aggregates
    if method == "fast":
        if needs_h and aggregates is None:
            aggregates = compute_aggregates(dataset, aggregate_spec)
        design = build_design(dataset, aggregates if needs_h else None, spec)
        return _fast_replicates(dataset, design, draws.counts)
    if method != "resample":
        raise ValueError(f"unknown bootstrap method {method!r}")
    out = np.empty(len(draws.indices))
    deficient = 0
    for b, picks in enumerate(draws.indices):
        rep = _resample_from_indices(dataset, picks)
        table = compute_aggregates(rep, aggregate_spec) if needs_h else None
        fit = g_formula_fit(rep, table, spec)
        out[b] = fit.estimate
        deficient += fit.rank_deficient
    return out, deficient


def summarize(
    estimate: float,
    replicates: np.ndarray,
    requested: int,
    discarded: int,
    rank_deficient: int = 0,
    estimate_rank_deficient: bool = False,
) -> BootstrapResult:
    """SE as the replicate SD; Wald CI around ``estimate``; percentile CI by interpolation."""
    replicates = np.asarray(replicates, dtype=float)
    se = float(np.std(replicates, ddof=1)) if replicates.size > 1 else 0.0
    lo, hi = np.percentile(replicates, [2.5, 97.5]) if replicates.size else (np.nan, np.nan)
    return BootstrapResult(
        estimate=float(estimate),
        replicates=replicates,
        requested=requested,
        discarded=discarded,
        se=se,
        wald_ci=(estimate - Z_975 * se, estimate + Z_975 * se),
        percentile_ci=(float(lo), float(hi)),
        rank_deficient=rank_deficient,
        estimate_rank_deficient=estimate_rank_deficient,
    )


def block_bootstrap(
    dataset: ClusteredDataset,
    spec: ModelSpec,
    B: int,
    seed: SeedLike,
    aggregate_spec: AggregateSpec | None = None,
    aggregates: AggregateTable | None = None,
    method: str = "fast",
) -> BootstrapResult:
    """Point estimate plus block-bootstrap SE, Wald and percentile 95% intervals.

    Parameters
    ----------
    dataset : ClusteredDataset
    spec : ModelSpec
    B : int
        Number of two-armed replicates, at least 2.
    seed : int or SeedSequence
    aggregate_spec : AggregateSpec, optional
        How to summarize unit covariates per cluster (default quartiles/means).
    aggregates : AggregateTable, optional
        Precomputed aggregates for ``dataset``; recomputed when omitted.
    method : {"fast", "resample"}

    Raises
    ------
    OneArmEmpty
        The data have only one arm.
    TooManyDegenerateReplicates
        Fewer than B two-armed resamples in ``10 * B`` draws.
    """
    if B < 2:
        raise ValueError(f"need at least 2 bootstrap replicates, got B={B}")
    if dataset.one_armed:
        raise OneArmEmpty("block bootstrap needs both treated and control clusters")
    needs_h = spec.adjustment.uses_aggregates
    if needs_h and aggregates is None:
        aggregates = compute_aggregates(dataset, aggregate_spec)
    fit = g_formula_fit(dataset, aggregates if needs_h else None, spec)
    draws = draw_clusters(dataset.a, B, make_rng(seed))
    reps, deficient = replicate_estimates(
        dataset, spec, draws, aggregates, aggregate_spec, method=method
    )
    return summarize(
        fit.estimate, reps, B, draws.discarded, deficient, fit.rank_deficient
    )
