"""Command-line interface.

Subcommands::

    cosgf simulate --trial 2b --m 50 --n 4000 --seed 7 --out-dir data/
    cosgf estimate --units data/units.csv --clusters data/clusters.csv --adjust whx
    cosgf balance --units data/units.csv --clusters data/clusters.csv --out balance.csv
    cosgf replicate-table1 --reps 1000 --boot 300 --seed 1 --out results.csv

Exit codes: 0 ok, 2 usage, 3 ingestion, 4 estimation, 5 internal.
Every output file starts with ``#`` lines echoing the resolved configuration
(no timestamps, no output paths), so reruns with the same seed are
byte-identical.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .aggregates import AggregateSpec, compute_aggregates
from .bootstrap import block_bootstrap
from .diagnostics import balance_table
from .dgp import SimulationConfig, Trial, simulate
from .errors import CosError, EstimationError, IngestionError
from .estimators import AdjustmentSet, ModelSpec
from .io import format_float, read_csv_pair, write_csv_pair, write_rows
from .rng import fresh_seed
from .study import TABLE1_SIZES, TABLE1_TRIALS, run_table1

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("cosgf")

EXIT_OK, EXIT_USAGE, EXIT_INGESTION, EXIT_ESTIMATION, EXIT_INTERNAL = 0, 2, 3, 4, 5
FORMATS = ("csv", "pretty", "jsonl")
TABLE1_COLUMNS = ("trial", "m", "n", "adjust", "mean", "sd", "avg_se", "cp", "failures")
BALANCE_COLUMNS = ("covariate", "level", "mean_t", "mean_c", "std_diff")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    seed: int | None = None
    seed_drawn: bool = False
    threads: int | None = None
    output: str | None = None
    format: str = "csv"
    # simulate
    trial: str | None = None
    m: int | None = None
    n: int | None = None
    out_dir: str | None = None
    # estimate / balance
    units: str | None = None
    clusters: str | None = None
    adjust: str = "whx"
    quadratic: bool = False
    bootstrap: int = 1000
    method: str = "fast"
    config_file: str | None = None
    aggregates: dict = field(default_factory=dict)
    with_aggregates: bool = True
    # replicate-table1
    reps: int = 1000
    boot: int = 300
    trials: tuple[str, ...] = tuple(t.value for t in TABLE1_TRIALS)
    sizes: tuple[tuple[int, int], ...] = TABLE1_SIZES

    def aggregate_spec(self) -> AggregateSpec:
        return AggregateSpec(overrides=self.aggregates)

    def echo(self) -> list[str]:
        """``key=value`` lines for every parameter that affects the results."""
        keys = {
            "simulate": ("trial", "m", "n", "seed"),
            "estimate": ("units", "clusters", "adjust", "quadratic", "bootstrap", "method",
                         "seed", "aggregates"),
            "balance": ("units", "clusters", "with_aggregates", "aggregates"),
            "replicate-table1": ("reps", "boot", "seed", "trials", "sizes"),
        }[self.subcommand]
        values = asdict(self)
        lines = [f"cosgf {__version__} {self.subcommand}"]
        for k in keys:
            v = values[k]
            if isinstance(v, (tuple, list)):
                v = " ".join("x".join(map(str, i)) if isinstance(i, (tuple, list)) else str(i) for i in v)
            elif isinstance(v, dict):
                v = json.dumps(v, sort_keys=True) if v else "default"
            lines.append(f"{k}={v}")
        return lines


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosgf",
        description="G-formula estimation and simulation for clustered observational studies.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, default_format="csv"):
        p.add_argument("--seed", type=int, help="master seed (random if omitted; always echoed)")
        p.add_argument("--threads", type=int, help="worker processes (default: all cores)")
        p.add_argument("--format", choices=FORMATS, default=default_format)

    p = sub.add_parser("simulate", help="write a simulated dataset as units/clusters/truth CSVs")
    p.add_argument("--trial", required=True, choices=["1", "2a", "2b"])
    p.add_argument("--m", type=int, required=True, help="number of clusters")
    p.add_argument("--n", type=int, required=True, help="number of units")
    p.add_argument("--out-dir", default=".", help="directory for units.csv, clusters.csv, truth.csv")
    common(p)

    for name, text in (("estimate", "g-formula estimate with block-bootstrap inference"),
                       ("balance", "standardized differences between arms")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--units", required=True)
        p.add_argument("--clusters", required=True)
        p.add_argument("--config", dest="config_file", help="TOML file with an 'aggregates' table")
        p.add_argument("--out", dest="output", help="write results to this file")
        common(p, "pretty" if name == "estimate" else "csv")
        if name == "estimate":
            p.add_argument("--adjust", default="whx", choices=[a.value for a in AdjustmentSet])
            p.add_argument("--quadratic", action="store_true", help="add squares of continuous regressors")
            p.add_argument("--bootstrap", type=int, default=1000, metavar="B")
            p.add_argument("--method", choices=("fast", "resample"), default="fast")
        else:
            p.add_argument("--no-aggregates", dest="with_aggregates", action="store_false")

    p = sub.add_parser("replicate-table1", help="Monte Carlo grid over trials, sizes, adjustment sets")
    p.add_argument("--reps", type=int, default=1000, metavar="R")
    p.add_argument("--boot", type=int, default=300, metavar="B")
    p.add_argument("--trials", default=",".join(t.value for t in TABLE1_TRIALS),
                   help="comma-separated subset of 1,2a,2b")
    p.add_argument("--sizes", default=",".join(f"{m}x{n}" for m, n in TABLE1_SIZES),
                   help="comma-separated MxN list")
    p.add_argument("--out", dest="output", default="results.csv")
    common(p)
    return parser


def _load_aggregates(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    table = doc.get("aggregates", {})
    if not isinstance(table, dict) or not all(isinstance(v, list) for v in table.values()):
        raise UsageError(f"{path}: 'aggregates' must map covariate names to lists like [\"q50\", \"mean\"]")
    return {str(k): tuple(str(s) for s in v) for k, v in table.items()}


def _parse_sizes(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for item in text.split(","):
        try:
            m, n = item.lower().split("x")
            out.append((int(m), int(n)))
        except ValueError:
            raise UsageError(f"bad size {item!r}; expected MxN such as 50x4000") from None
    return tuple(out)


def parse_args(argv: list[str] | None = None) -> RunConfig:
    """Parse and validate arguments; raises SystemExit(2) on usage errors."""
    parser = _parser()
    ns = parser.parse_args(argv)
    values = {k: v for k, v in vars(ns).items() if k != "verbose" and v is not None}
    try:
        if "trials" in values:
            values["trials"] = tuple(Trial.parse(t).value for t in values["trials"].split(","))
        if "sizes" in values:
            values["sizes"] = _parse_sizes(values["sizes"])
        if values.get("config_file"):
            values["aggregates"] = _load_aggregates(values["config_file"])
            AggregateSpec(overrides=values["aggregates"])
        for key in ("bootstrap", "boot"):
            if key in values and values[key] < 2:
                raise UsageError(f"--{key} must be at least 2")
        if values.get("reps", 1) < 1:
            raise UsageError("--reps must be at least 1")
        if ns.subcommand == "simulate":
            SimulationConfig(values["trial"], values["m"], values["n"])
    except (UsageError, ValueError) as exc:
        parser.error(str(exc))
    config = RunConfig(**values)
    if config.seed is None and config.subcommand != "balance":
        config.seed = fresh_seed()
        config.seed_drawn = True
    logging.basicConfig(
        level=logging.INFO if ns.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    return config


def _emit(rows: list[dict], columns, config: RunConfig, path: str | None, fmt: str) -> None:
    preamble = config.echo()
    if fmt == "csv":
        if path is None:
            for line in preamble:
                print(f"# {line}")
            print(",".join(columns))
            for r in rows:
                print(",".join(format_float(r[c]) if isinstance(r[c], float) else str(r[c]) for c in columns))
        else:
            write_rows(path, columns, [[r[c] for c in columns] for r in rows], preamble)
        return
    if fmt == "jsonl":
        lines = [json.dumps({"config": preamble})] + [json.dumps({c: r[c] for c in columns}) for r in rows]
    else:
        lines = [f"# {line}" for line in preamble] + _pretty(rows, columns)
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _pretty(rows, columns) -> list[str]:
    def cell(v):
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    table = [list(columns)] + [[cell(r[c]) for c in columns] for r in rows]
    widths = [max(len(row[k]) for row in table) for k in range(len(columns))]
    out = ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in table]
    out.insert(1, "  ".join("-" * w for w in widths))
    return out


def _run_simulate(config: RunConfig) -> None:
    sim = simulate(SimulationConfig(config.trial, config.m, config.n, config.seed))
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    preamble = config.echo()
    write_csv_pair(sim.dataset, out / "units.csv", out / "clusters.csv", preamble)
    write_rows(
        out / "truth.csv",
        ("unit_id", "y1", "y0", "ite"),
        [[u, float(a), float(b), float(c)] for u, a, b, c in
         zip(sim.dataset.unit_ids, sim.y1, sim.y0, sim.ite)],
        preamble,
    )
    ds = sim.dataset
    print(
        f"simulated trial {config.trial}: m={ds.m}, n={ds.n}, treated clusters={int(ds.a.sum())}, "
        f"sample ATE={sim.true_effect:.4f}; wrote units.csv, clusters.csv, truth.csv to {out}"
    )


def _run_estimate(config: RunConfig) -> None:
    dataset = read_csv_pair(config.units, config.clusters)
    spec = ModelSpec(AdjustmentSet.parse(config.adjust), config.quadratic)
    agg_spec = config.aggregate_spec()
    result = block_bootstrap(
        dataset, spec, config.bootstrap, config.seed, aggregate_spec=agg_spec, method=config.method
    )
    row = {"adjust": spec.adjustment.value, "quadratic": int(spec.quadratic), **result.as_dict()}
    row["rank_deficient_estimate"] = int(row["rank_deficient_estimate"])
    columns = tuple(row)
    if config.output or config.format != "pretty":
        _emit([row], columns, config, config.output, config.format)
    lo_w, hi_w = result.wald_ci
    lo_p, hi_p = result.percentile_ci
    summary = [
        f"adjustment set {{{spec.adjustment.label}}}{' + squares' if spec.quadratic else ''}: "
        f"n={dataset.n}, m={dataset.m} ({int(dataset.a.sum())} treated)",
        f"  estimate        {result.estimate: .6f}",
        f"  bootstrap SE    {result.se: .6f}   (B={result.requested}, seed={config.seed})",
        f"  95% Wald CI     ({lo_w: .6f}, {hi_w: .6f})",
        f"  95% percentile  ({lo_p: .6f}, {hi_p: .6f})",
        f"  discarded one-armed resamples: {result.discarded}",
        f"  rank-deficient fits: estimate={'yes' if result.estimate_rank_deficient else 'no'}, "
        f"replicates={result.rank_deficient}",
    ]
    stream = sys.stderr if (config.output is None and config.format != "pretty") else sys.stdout
    print("\n".join(summary), file=stream)


def _run_balance(config: RunConfig) -> None:
    dataset = read_csv_pair(config.units, config.clusters)
    table = compute_aggregates(dataset, config.aggregate_spec()) if config.with_aggregates else None
    rows = [
        {"covariate": r.covariate, "level": r.level.value, "mean_t": r.mean_t,
         "mean_c": r.mean_c, "std_diff": r.std_diff}
        for r in balance_table(dataset, table)
    ]
    _emit(rows, BALANCE_COLUMNS, config, config.output, config.format)


def _run_table1(config: RunConfig) -> None:
    started = time.perf_counter()
    results = run_table1(
        seed=config.seed, reps=config.reps, boot=config.boot, threads=config.threads,
        trials=config.trials, sizes=config.sizes,
    )
    rows = [r.row() for r in results]
    _emit(rows, TABLE1_COLUMNS, config, config.output, config.format)
    if config.output:
        print("\n".join(_pretty(rows, TABLE1_COLUMNS)))
    failures = sum(r.failures for r in results)
    print(
        f"{len(rows)} scenarios, {config.reps} repetitions each, B={config.boot}, seed={config.seed}, "
        f"failed repetitions={failures}, {time.perf_counter() - started:.0f}s",
        file=sys.stderr,
    )


_COMMANDS = {
    "simulate": _run_simulate,
    "estimate": _run_estimate,
    "balance": _run_balance,
    "replicate-table1": _run_table1,
}


def run(config: RunConfig) -> int:
    """Execute a parsed configuration and return the process exit code."""
    if config.seed_drawn:
        print(f"no --seed given; using seed {config.seed}", file=sys.stderr)
    try:
        _COMMANDS[config.subcommand](config)
    except IngestionError as exc:
        print(f"cosgf: input error: {exc}", file=sys.stderr)
        return EXIT_INGESTION
    except (EstimationError, CosError) as exc:
        print(f"cosgf: estimation error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"cosgf: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
