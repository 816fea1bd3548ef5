"""Monte Carlo evaluation of the g-formula estimators over simulated trials.

Each repetition simulates one dataset and one set of cluster resamples and
evaluates every requested adjustment set on both, so rows for different
adjustment sets are paired. Repetition streams come from
``derive_seed(master, trial, m, n, rep)``, which makes a repetition's result
independent of which other repetitions or adjustment sets run alongside it.
"""
from __future__ import annotations

import logging
import os
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import Z_975, draw_clusters, replicate_estimates
from .dgp import DGP_AGGREGATES, TRUE_ATE, SimulationConfig, Trial, simulate
from .errors import CosError
from .estimators import AdjustmentSet, ModelSpec, g_formula
from .rng import derive_seed, make_rng

__all__ = [
    "Scenario",
    "RepRecord",
    "ScenarioResult",
    "run_scenario",
    "run_size_group",
    "run_table1",
    "TABLE1_TRIALS",
    "TABLE1_SIZES",
    "TABLE1_ADJUSTMENTS",
]

log = logging.getLogger(__name__)

TABLE1_TRIALS = (Trial.TRIAL1, Trial.TRIAL2A, Trial.TRIAL2B)
TABLE1_SIZES = ((50, 4000), (100, 4000), (50, 8000))
TABLE1_ADJUSTMENTS = (AdjustmentSet.W, AdjustmentSet.WH, AdjustmentSet.WHX)
_TRIAL_KEY = {Trial.TRIAL1: 1, Trial.TRIAL2A: 2, Trial.TRIAL2B: 3}


@dataclass(frozen=True)
class Scenario:
    trial: Trial
    m: int
    n: int
    adjustment: AdjustmentSet
    reps: int = 1000
    boot: int = 300
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "trial", Trial.parse(self.trial))
        object.__setattr__(self, "adjustment", AdjustmentSet.parse(self.adjustment))
        if self.reps < 1:
            raise ValueError("need at least one repetition")
        if self.boot < 2:
            raise ValueError("need at least two bootstrap replicates")


@dataclass(frozen=True)
class RepRecord:
    rep: int
    estimate: float
    se: float
    covered: bool


@dataclass(frozen=True)
class ScenarioResult:
    scenario: Scenario
    records: tuple[RepRecord, ...]
    failures: int = 0
    failure_messages: tuple[str, ...] = field(default=(), repr=False)

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r.estimate for r in self.records])

    @property
    def mean(self) -> float:
        return float(self.estimates.mean()) if self.records else float("nan")

    @property
    def sd(self) -> float:
        """SD over repetitions; 0 for a single repetition (see ``sd_defined``)."""
        if len(self.records) < 2:
            return 0.0
        return float(self.estimates.std(ddof=1))

    @property
    def sd_defined(self) -> bool:
        return len(self.records) >= 2

    @property
    def avg_se(self) -> float:
        return float(np.mean([r.se for r in self.records])) if self.records else float("nan")

    @property
    def cp(self) -> float:
        return float(np.mean([r.covered for r in self.records])) if self.records else float("nan")

    def row(self) -> dict:
        s = self.scenario
        return {
            "trial": s.trial.value,
            "m": s.m,
            "n": s.n,
            "adjust": s.adjustment.value,
            "mean": self.mean,
            "sd": self.sd,
            "avg_se": self.avg_se,
            "cp": self.cp,
            "failures": self.failures,
        }


def _one_rep(args) -> dict:
    trial, m, n, adjustments, boot, master, rep = args
    root = derive_seed(master, _TRIAL_KEY[trial], m, n, rep)
    out = {}
    try:
        sim = simulate(SimulationConfig(trial, m, n, derive_seed(root, 0)))
        draws = draw_clusters(sim.dataset.a, boot, make_rng(derive_seed(root, 1)))
    except CosError as exc:
        return {adj: exc for adj in adjustments}
    for adj in adjustments:
        spec = ModelSpec(adj)
        table = sim.aggregates if adj.uses_aggregates else None
        try:
            est = g_formula(sim.dataset, table, spec)
            reps, _ = replicate_estimates(sim.dataset, spec, draws, table, DGP_AGGREGATES)
        except CosError as exc:
            out[adj] = exc
            continue
        se = float(np.std(reps, ddof=1))
        covered = est - Z_975 * se <= TRUE_ATE <= est + Z_975 * se
        out[adj] = RepRecord(rep, est, se, bool(covered))
    return out


def _workers(threads: int | None) -> int:
    if threads is None:
        return os.cpu_count() or 1
    return max(1, int(threads))


def run_size_group(
    trial,
    m: int,
    n: int,
    adjustments: Sequence = TABLE1_ADJUSTMENTS,
    reps: int = 1000,
    boot: int = 300,
    seed: int = 0,
    threads: int | None = 1,
) -> dict[AdjustmentSet, ScenarioResult]:
    """All adjustment sets for one (trial, m, n), sharing data per repetition."""
    trial = Trial.parse(trial)
    adjustments = tuple(AdjustmentSet.parse(a) for a in adjustments)
    jobs = [(trial, m, n, adjustments, boot, seed, r) for r in range(reps)]
    workers = _workers(threads)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_one_rep, jobs, chunksize=max(1, reps // (4 * workers))))
    else:
        outcomes = [_one_rep(job) for job in jobs]

    results = {}
    for adj in adjustments:
        records, errors = [], []
        for outcome in outcomes:
            item = outcome[adj]
            if isinstance(item, Exception):
                errors.append(f"{type(item).__name__}: {item}")
            else:
                records.append(item)
        scenario = Scenario(trial, m, n, adj, reps, boot, seed)
        results[adj] = ScenarioResult(scenario, tuple(records), len(errors), tuple(errors))
        if errors:
            log.warning("%s: %d failed repetitions, first: %s", scenario, len(errors), errors[0])
    return results


def run_scenario(scenario: Scenario, threads: int | None = 1) -> ScenarioResult:
    """Mean, SD, average bootstrap SE and Wald coverage of 0.16 over repetitions."""
    group = run_size_group(
        scenario.trial, scenario.m, scenario.n, (scenario.adjustment,),
        scenario.reps, scenario.boot, scenario.seed, threads,
    )
    return group[scenario.adjustment]


def run_table1(
    seed: int = 0,
    reps: int = 1000,
    boot: int = 300,
    threads: int | None = 1,
    trials: Iterable = TABLE1_TRIALS,
    sizes: Iterable[tuple[int, int]] = TABLE1_SIZES,
    adjustments: Sequence = TABLE1_ADJUSTMENTS,
) -> list[ScenarioResult]:
    """The trial x size x adjustment grid, rows in table order."""
    out = []
    for trial in trials:
        for m, n in sizes:
            log.info("trial %s, m=%d, n=%d: %d repetitions", Trial.parse(trial).value, m, n, reps)
            group = run_size_group(trial, m, n, adjustments, reps, boot, seed, threads)
            out.extend(group[AdjustmentSet.parse(a)] for a in adjustments)
    return out
