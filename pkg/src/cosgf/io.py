"""CSV pair format.

Units file ``unit_id,cluster_id,y,<x_1>,...,<x_p>`` and clusters file
``cluster_id,a,<w_1>,...,<w_q>``. Lines starting with ``#`` are comments
(used for the run-configuration echo). Floats are written with ``repr`` so a
write/read cycle reproduces every value bit for bit.
"""
from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .data import ClusteredDataset
from .errors import DanglingClusterRef, InconsistentSchema, IngestionError, InvalidValue

UNIT_KEYS = ("unit_id", "cluster_id", "y")
CLUSTER_KEYS = ("cluster_id", "a")


def format_float(value: float) -> str:
    return repr(float(value))


def _read_rows(path: Path, required: Sequence[str]) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise IngestionError(f"{path}: file is empty") from None
            rows = [row for row in reader if row]
    except OSError as exc:
        raise IngestionError(f"{path}: {exc.strerror or exc}") from exc
    if tuple(header[: len(required)]) != tuple(required):
        raise InconsistentSchema(
            f"{path}: header must start with {','.join(required)}, got {','.join(header)}"
        )
    if len(set(header)) != len(header):
        raise InconsistentSchema(f"{path}: duplicate column names in header")
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise InconsistentSchema(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
            )
    return header, rows


def _parse_matrix(rows, start: int, width: int, path: Path, header) -> np.ndarray:
    out = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        for c in range(width):
            cell = row[start + c].strip()
            try:
                value = float(cell)
            except ValueError:
                value = math.nan
            if not math.isfinite(value):
                raise InvalidValue(
                    f"{path}:{r + 2}: column {header[start + c]!r} has non-numeric value {cell!r}"
                )
            out[r, c] = value
    return out


def read_csv_pair(units_path, clusters_path) -> ClusteredDataset:
    """Load a dataset from a units CSV and a clusters CSV."""
    units_path, clusters_path = Path(units_path), Path(clusters_path)
    u_header, u_rows = _read_rows(units_path, UNIT_KEYS)
    c_header, c_rows = _read_rows(clusters_path, CLUSTER_KEYS)
    if not u_rows or not c_rows:
        raise IngestionError("units and clusters files must each contain at least one row")

    cluster_ids = [row[0].strip() for row in c_rows]
    a_raw = _parse_matrix(c_rows, 1, 1, clusters_path, c_header)[:, 0]
    bad = np.flatnonzero((a_raw != 0) & (a_raw != 1))
    if bad.size:
        raise InvalidValue(
            f"{clusters_path}:{bad[0] + 2}: treatment 'a' must be 0 or 1, got {c_rows[bad[0]][1]!r}"
        )
    w = _parse_matrix(c_rows, 2, len(c_header) - 2, clusters_path, c_header)

    index = {cid: j for j, cid in enumerate(cluster_ids)}
    unit_cluster = np.empty(len(u_rows), dtype=np.intp)
    for i, row in enumerate(u_rows):
        cid = row[1].strip()
        if cid not in index:
            raise DanglingClusterRef(
                f"{units_path}:{i + 2}: unit {row[0]!r} refers to unknown cluster {cid!r}"
            )
        unit_cluster[i] = index[cid]
    yx = _parse_matrix(u_rows, 2, len(u_header) - 2, units_path, u_header)

    return ClusteredDataset(
        [row[0].strip() for row in u_rows],
        unit_cluster,
        yx[:, 0],
        yx[:, 1:],
        cluster_ids,
        a_raw.astype(np.int8),
        w,
        u_header[3:],
        c_header[2:],
    )


def _preamble(fh, lines):
    for line in lines:
        fh.write(f"# {line}\n")


def write_csv_pair(
    dataset: ClusteredDataset, units_path, clusters_path, preamble: Sequence[str] = ()
) -> None:
    with open(units_path, "w", newline="", encoding="utf-8") as fh:
        _preamble(fh, preamble)
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([*UNIT_KEYS, *dataset.unit_covariate_names])
        for i, uid in enumerate(dataset.unit_ids):
            out.writerow(
                [uid, dataset.cluster_ids[dataset.unit_cluster[i]], format_float(dataset.y[i])]
                + [format_float(v) for v in dataset.x[i]]
            )
    with open(clusters_path, "w", newline="", encoding="utf-8") as fh:
        _preamble(fh, preamble)
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([*CLUSTER_KEYS, *dataset.cluster_covariate_names])
        for j, cid in enumerate(dataset.cluster_ids):
            out.writerow([cid, str(int(dataset.a[j]))] + [format_float(v) for v in dataset.w[j]])


def write_rows(path, header: Sequence[str], rows, preamble: Sequence[str] = ()) -> None:
    """Write a CSV, optionally preceded by ``# key=value`` comment lines."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _preamble(fh, preamble)
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([format_float(v) if isinstance(v, float) else v for v in row])
