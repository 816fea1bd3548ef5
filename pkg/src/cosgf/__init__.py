"""G-formula estimation, block bootstrap and simulation for clustered observational studies."""

__version__ = "0.1.0"

from .aggregates import AggregateSpec, AggregateTable, attach_aggregates, compute_aggregates
from .bootstrap import BootstrapResult, block_bootstrap, resample_clusters
from .data import Cluster, ClusteredDataset, Covariate, Kind, Unit, arm_partition, build_dataset
from .diagnostics import BalanceRow, balance_table, standardized_difference
from .dgp import SimulatedDataset, SimulationConfig, Trial, simulate
from .estimators import AdjustmentSet, ModelSpec, build_design, g_formula, least_squares
from .io import read_csv_pair, write_csv_pair
from .study import Scenario, ScenarioResult, run_scenario, run_table1

__all__ = [
    "AdjustmentSet",
    "AggregateSpec",
    "AggregateTable",
    "BalanceRow",
    "BootstrapResult",
    "Cluster",
    "ClusteredDataset",
    "Covariate",
    "Kind",
    "ModelSpec",
    "Scenario",
    "ScenarioResult",
    "SimulatedDataset",
    "SimulationConfig",
    "Trial",
    "Unit",
    "arm_partition",
    "attach_aggregates",
    "balance_table",
    "block_bootstrap",
    "build_dataset",
    "build_design",
    "compute_aggregates",
    "g_formula",
    "least_squares",
    "read_csv_pair",
    "resample_clusters",
    "run_scenario",
    "run_table1",
    "simulate",
    "standardized_difference",
    "write_csv_pair",
]
