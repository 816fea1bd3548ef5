"""Parametric g-formula with arm-specific linear outcome models.

Fit one least-squares model on treated units and one on control units,
predict both models for every unit, and report the difference of the two
prediction means. The adjustment set decides which regressors enter:

* ``W``   cluster covariates
* ``WH``  plus cluster aggregates of unit covariates
* ``WHX`` plus the unit covariates themselves
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .aggregates import AggregateTable, attach_aggregates
from .data import ClusteredDataset, Kind
from .errors import MissingAggregates, NoRows, OneArmEmpty

__all__ = [
    "AdjustmentSet",
    "ModelSpec",
    "Design",
    "FittedArmModel",
    "LstsqResult",
    "build_design",
    "least_squares",
    "fit_arm",
    "g_formula",
    "g_formula_fit",
    "GFormulaFit",
    "RCOND",
]

RCOND = 1e-8
INTERCEPT = "(intercept)"


class AdjustmentSet(str, enum.Enum):
    W = "w"
    WH = "wh"
    WHX = "whx"

    @classmethod
    def parse(cls, value) -> AdjustmentSet:
        if isinstance(value, AdjustmentSet):
            return value
        key = str(value).strip().lower().replace(",", "").replace(" ", "")
        key = key.strip("{}")
        return cls(key)

    @property
    def uses_aggregates(self) -> bool:
        return self is not AdjustmentSet.W

    @property
    def uses_units(self) -> bool:
        return self is AdjustmentSet.WHX

    @property
    def label(self) -> str:
        return {"w": "W", "wh": "W, h", "whx": "W, h, X"}[self.value]


@dataclass(frozen=True)
class ModelSpec:
    adjustment: AdjustmentSet = AdjustmentSet.WHX
    quadratic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "adjustment", AdjustmentSet.parse(self.adjustment))


@dataclass(frozen=True)
class Design:
    """Regressor matrix (intercept first) and response, one row per unit."""

    names: tuple[str, ...]
    matrix: np.ndarray
    response: np.ndarray

    def rows(self, index) -> Design:
        return Design(self.names, self.matrix[index], self.response[index])


class LstsqResult(NamedTuple):
    coef: np.ndarray
    rank: int
    deficient: bool


@dataclass(frozen=True)
class FittedArmModel:
    arm: int
    names: tuple[str, ...]
    coef: np.ndarray
    rank_deficient: bool
    n_rows: int

    def predict(self, matrix: np.ndarray) -> np.ndarray:
        return matrix @ self.coef


def build_design(
    dataset: ClusteredDataset,
    aggregates: AggregateTable | None,
    spec: ModelSpec,
    rows=None,
) -> Design:
    """Assemble regressors in the order intercept, W, h, X, then squares.

    Squares are added only for continuous regressors; aggregate columns count
    as continuous. ``rows`` optionally selects a subset of units.
    """
    adj = spec.adjustment
    blocks = [np.ones((dataset.n, 1)), dataset.w[dataset.unit_cluster]]
    names = [INTERCEPT, *dataset.cluster_covariate_names]
    continuous = [False] + [c.kind is Kind.CONTINUOUS for c in dataset.cluster_covariates]
    if adj.uses_aggregates:
        if aggregates is None:
            raise MissingAggregates(f"adjustment set {adj.label!r} needs cluster aggregates")
        blocks.append(attach_aggregates(dataset, aggregates))
        names += aggregates.names
        continuous += [True] * len(aggregates.names)
    if adj.uses_units:
        blocks.append(dataset.x)
        names += dataset.unit_covariate_names
        continuous += [c.kind is Kind.CONTINUOUS for c in dataset.unit_covariates]
    matrix = np.hstack(blocks)
    if spec.quadratic:
        cols = [k for k, flag in enumerate(continuous) if flag]
        matrix = np.hstack([matrix, matrix[:, cols] ** 2])
        names += [f"{names[k]}^2" for k in cols]
    design = Design(tuple(names), matrix, np.asarray(dataset.y))
    return design if rows is None else design.rows(rows)


def least_squares(matrix, response, rcond: float = RCOND) -> LstsqResult:
    """Minimum-norm least-squares solution via SVD.

    Singular values below ``rcond`` times the largest are treated as zero;
    the result is then flagged as rank deficient.
    """
    matrix = np.asarray(matrix, dtype=float)
    response = np.asarray(response, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise NoRows("least squares needs at least one row")
    coef, _, rank, _ = np.linalg.lstsq(matrix, response, rcond=rcond)
    return LstsqResult(coef, int(rank), int(rank) < matrix.shape[1])


def fit_arm(design: Design, treated: np.ndarray, arm: int) -> FittedArmModel:
    mask = treated == arm
    if not mask.any():
        raise OneArmEmpty(f"no units in the {'treated' if arm else 'control'} arm")
    fit = least_squares(design.matrix[mask], design.response[mask])
    return FittedArmModel(arm, design.names, fit.coef, fit.deficient, int(mask.sum()))


@dataclass(frozen=True)
class GFormulaFit:
    estimate: float
    treated: FittedArmModel
    control: FittedArmModel
    mean_treated: float
    mean_control: float

    @property
    def rank_deficient(self) -> bool:
        return self.treated.rank_deficient or self.control.rank_deficient


def g_formula_fit(
    dataset: ClusteredDataset, aggregates: AggregateTable | None, spec: ModelSpec
) -> GFormulaFit:
    """Fit both arm models and standardize their predictions over all n units."""
    if dataset.one_armed:
        arm = "treated" if dataset.a[0] == 1 else "control"
        raise OneArmEmpty(f"all {dataset.m} clusters are {arm}; need both arms to estimate")
    design = build_design(dataset, aggregates, spec)
    treated = dataset.unit_treatment
    model1, model0 = fit_arm(design, treated, 1), fit_arm(design, treated, 0)
    mu1 = float(model1.predict(design.matrix).mean())
    mu0 = float(model0.predict(design.matrix).mean())
    return GFormulaFit(mu1 - mu0, model1, model0, mu1, mu0)


def g_formula(
    dataset: ClusteredDataset, aggregates: AggregateTable | None, spec: ModelSpec
) -> float:
    """Standardized mean difference of arm-model predictions over all n units."""
    return g_formula_fit(dataset, aggregates, spec).estimate
