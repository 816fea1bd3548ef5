"""Synthetic clustered observational studies with known treatment effects.

Three target trials differ only in the order of unit-to-cluster pairing and
cluster treatment assignment:

* ``TRIAL1``  pairing first, then treatment depends on W and the realized
  cluster aggregates.
* ``TRIAL2A`` treatment first (depends on W only), pairing blind to it.
* ``TRIAL2B`` treatment first, pairing tilted toward treated clusters for
  units with large ``1 + x1 + x2`` (differential selection). Some write-ups
  call this "target trial 3".

The outcome model is shared by all three::

    Y = x1 + x2 + 0.4 A (x1 + x2) + 0.5 (W + h1 + h2 + h3 + h4) + 0.1 e + eps

so the true average effect is ``0.4 E[x1 + x2] = 0.16``.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np

from .aggregates import AggregateSpec, AggregateTable, compute_aggregates
from .data import ClusteredDataset, Covariate, Kind
from .errors import StageOrderViolation
from .rng import make_rng

TRUE_ATE = 0.16
EFFECT_SLOPE = 0.4
X2_PROB = 0.4

# aggregates of x1 (three quartiles) and x2 (mean), in outcome-model order
DGP_AGGREGATES = AggregateSpec(overrides={"x1": ("q25", "q50", "q75"), "x2": ("mean",)})


class Trial(str, enum.Enum):
    TRIAL1 = "1"
    TRIAL2A = "2a"
    TRIAL2B = "2b"

    @classmethod
    def parse(cls, value) -> Trial:
        if isinstance(value, Trial):
            return value
        key = str(value).strip().lower().replace("(", "").replace(")", "")
        key = {"3": "2b", "trial1": "1", "trial2a": "2a", "trial2b": "2b"}.get(key, key)
        return cls(key)


@dataclass(frozen=True)
class SimulationConfig:
    trial: Trial
    m: int
    n: int
    seed: int | np.random.SeedSequence = 0

    def __post_init__(self):
        object.__setattr__(self, "trial", Trial.parse(self.trial))
        if self.m < 2:
            raise ValueError(f"need at least 2 clusters, got m={self.m}")
        if self.n < self.m:
            raise ValueError(f"need n >= m, got n={self.n}, m={self.m}")


@dataclass(frozen=True)
class Baseline:
    w: np.ndarray
    x1: np.ndarray
    x2: np.ndarray


@dataclass(frozen=True)
class SimulatedDataset:
    """A simulated dataset plus both potential outcomes at the realized pairing."""

    dataset: ClusteredDataset
    y1: np.ndarray
    y0: np.ndarray
    ite: np.ndarray
    aggregates: AggregateTable
    config: SimulationConfig

    @property
    def true_effect(self) -> float:
        """Sample average of the unit-level effects."""
        return float(self.ite.mean())


def gen_baseline(n: int, m: int, rng: np.random.Generator) -> Baseline:
    """W ~ N(0,1) per cluster; x1 ~ N(0,1) and x2 ~ Bernoulli(0.4) per unit."""
    w = rng.standard_normal(m)
    x1 = rng.standard_normal(n)
    x2 = (rng.random(n) < X2_PROB).astype(float)
    return Baseline(w, x1, x2)


def pairing_probabilities(x1, x2, w, a=None) -> np.ndarray:
    """Row-stochastic (n, m) matrix of P(J_i = j).

    Cluster score ``0.2 W_j`` (plus ``0.2 A_j`` when ``a`` is given) is scaled
    by the unit's ``1 + x1 + x2`` and pushed through a softmax over clusters.
    """
    score = 0.2 * np.asarray(w, dtype=float)
    if a is not None:
        score = score + 0.2 * np.asarray(a, dtype=float)
    logits = np.multiply.outer(1.0 + np.asarray(x1) + np.asarray(x2), score)
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    return logits


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One inverse-CDF draw per row of a row-stochastic matrix."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    idx = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def assign_units(x1, x2, w, a, trial: Trial, rng: np.random.Generator) -> np.ndarray:
    """Draw each unit's cluster index.

    ``a`` must be None for trials 1 and 2(a) (pairing happens before, or
    blind to, treatment) and must be supplied for trial 2(b).
    """
    trial = Trial.parse(trial)
    if trial is Trial.TRIAL2B:
        if a is None:
            raise StageOrderViolation("trial 2b pairing depends on treatment; assign treatment first")
        probs = pairing_probabilities(x1, x2, w, a)
    else:
        if a is not None:
            raise StageOrderViolation(f"trial {trial.value} pairing must not see treatment")
        probs = pairing_probabilities(x1, x2, w)
    return sample_categorical(probs, rng)


def treatment_probability(w, h=None, trial: Trial = Trial.TRIAL2A) -> np.ndarray:
    trial = Trial.parse(trial)
    w = np.asarray(w, dtype=float)
    if trial is Trial.TRIAL1:
        if h is None:
            raise StageOrderViolation("trial 1 treatment depends on aggregates; pair units first")
        h = np.asarray(h, dtype=float)
        logit = 0.2 * w + 0.2 * (h[:, 0] + h[:, 1] + h[:, 2]) + 0.2 * (h[:, 3] - X2_PROB)
    else:
        if h is not None:
            raise StageOrderViolation(f"trial {trial.value} treatment happens before pairing")
        logit = 0.2 * w
    return 1.0 / (1.0 + np.exp(-logit))


def assign_treatment(w, h, trial: Trial, rng: np.random.Generator) -> np.ndarray:
    p = treatment_probability(w, h, trial)
    return (rng.random(p.shape[0]) < p).astype(np.int8)


def gen_outcomes(x1, x2, w, j, a, h, rng: np.random.Generator):
    """Observed outcome and both potential outcomes.

    The potential outcomes share the cluster effect, the unit noise and the
    realized aggregates; they differ only in the treatment term.
    """
    m = w.shape[0]
    e = rng.standard_normal(m)
    eps = rng.standard_normal(x1.shape[0])
    s = x1 + x2
    y0 = s + 0.5 * (w + h.sum(axis=1))[j] + 0.1 * e[j] + eps
    ite = EFFECT_SLOPE * s
    y1 = y0 + ite
    y = np.where(a[j] == 1, y1, y0)
    return y, y1, y0, ite


@functools.lru_cache(maxsize=16)
def _ids(prefix: str, count: int) -> tuple[str, ...]:
    width = len(str(count))
    return tuple(f"{prefix}{k:0{width}d}" for k in range(1, count + 1))


def _dataset(base: Baseline, j: np.ndarray, a: np.ndarray, y) -> ClusteredDataset:
    m, n = base.w.shape[0], base.x1.shape[0]
    return ClusteredDataset(
        _ids("u", n),
        j,
        y,
        np.column_stack([base.x1, base.x2]),
        _ids("c", m),
        a,
        base.w[:, None],
        (Covariate("x1", Kind.CONTINUOUS), Covariate("x2", Kind.BINARY)),
        (Covariate("w", Kind.CONTINUOUS),),
    )


def simulate(config: SimulationConfig) -> SimulatedDataset:
    """Run the trial's stages in order and return data plus ground truth.

    Raises :class:`~cosgf.errors.EmptyCluster` if some cluster attracts no
    units (vanishingly rare at n/m >= 40).
    """
    rng = make_rng(config.seed)
    base = gen_baseline(config.n, config.m, rng)
    placeholder_y = np.zeros(config.n)

    if config.trial is Trial.TRIAL1:
        j = assign_units(base.x1, base.x2, base.w, None, config.trial, rng)
        paired = _dataset(base, j, np.zeros(config.m, dtype=np.int8), placeholder_y)
        table = compute_aggregates(paired, DGP_AGGREGATES)
        a = assign_treatment(base.w, table.values, config.trial, rng)
    else:
        a = assign_treatment(base.w, None, config.trial, rng)
        pairing_a = a if config.trial is Trial.TRIAL2B else None
        j = assign_units(base.x1, base.x2, base.w, pairing_a, config.trial, rng)
        paired = _dataset(base, j, a, placeholder_y)
        table = compute_aggregates(paired, DGP_AGGREGATES)

    y, y1, y0, ite = gen_outcomes(base.x1, base.x2, base.w, j, a, table.values, rng)
    return SimulatedDataset(_dataset(base, j, a, y), y1, y0, ite, table, config)
