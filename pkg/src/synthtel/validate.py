"""Consistency checks that run on an exported dataset directory alone."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cluster import ClusterTopology
from .dataset import GT_COLUMNS, _interval_mask, header_from_schema, parse_schema


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str = ""

    def __str__(self) -> str:
        return f"[{'PASS' if self.ok else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


def _read_intervals(path: Path) -> list[tuple[int, int]]:
    with open(path, newline="") as fh:
        return [(int(r["start_tick"]), int(r["end_tick"])) for r in csv.DictReader(fh)]


def validate_dataset(dataset_dir: str | Path) -> list[Check]:
    """Round-trip, schema, OR-law and ground-truth coverage checks.

    Raises OSError if a file is missing.
    """
    d = Path(dataset_dir)
    checks: list[Check] = []

    with open(d / "metrics.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)

    ragged = [i for i, r in enumerate(rows) if len(r) != len(header)]
    values = None
    if ragged:
        checks.append(Check("round_trip", False, f"{len(ragged)} ragged row(s), first at data row {ragged[0]}"))
    else:
        try:
            values = np.array([[float(c) if c else np.nan for c in r] for r in rows], dtype=float)
            values = values.reshape(len(rows), len(header))
            checks.append(Check("round_trip", True, f"{len(rows)} rows x {len(header)} columns"))
        except ValueError as exc:
            checks.append(Check("round_trip", False, f"unparseable cell: {exc}"))

    schema = parse_schema((d / "schema.md").read_text())
    topology = ClusterTopology.from_dict(json.loads((d / "topology.json").read_text()))
    expected = header_from_schema(topology, schema)
    if header == expected:
        checks.append(Check("schema", True, f"{len(header) - 1} data columns"))
    else:
        diff = next((i for i, (a, b) in enumerate(zip(header, expected)) if a != b), min(len(header), len(expected)))
        checks.append(Check("schema", False, f"header differs from schema at column {diff}"))
    if values is None:
        return checks

    n_rows = len(rows)
    window = schema["sampling_interval"] // schema["tick_seconds"]
    col = {name: i for i, name in enumerate(header)}
    ts = values[:, col["timestamp"]]
    expected_ts = np.arange(n_rows) * schema["sampling_interval"]
    checks.append(Check("timestamps", bool(np.array_equal(ts, expected_ts)), f"every {schema['sampling_interval']} s"))

    gt = {}
    for name in GT_COLUMNS:
        v = values[:, col[name]]
        if not np.all((v == 0) | (v == 1)):
            checks.append(Check("ground_truth_values", False, f"{name} is not 0/1"))
            return checks
        gt[name] = v.astype(bool)
    or_ok = np.array_equal(gt["anomaly_gt"], gt["load_anomaly_gt"] | gt["fis_anomaly_gt"])
    checks.append(Check("or_law", bool(or_ok), "anomaly_gt == load_anomaly_gt | fis_anomaly_gt"))

    for name, fname in (("fis_anomaly_gt", "fis_experiments.csv"), ("load_anomaly_gt", "load_anomalies.csv")):
        intervals = _read_intervals(d / fname)
        covered = _interval_mask(intervals, n_rows, window)
        missing = int(np.sum(covered & ~gt[name]))
        extra = int(np.sum(gt[name] & ~covered))
        checks.append(Check(
            f"{name}_coverage",
            missing == 0 and extra == 0,
            f"{len(intervals)} interval(s); {missing} uncovered row(s), {extra} unexplained row(s)",
        ))

    pct = [i for i, h in enumerate(header) if h.endswith("utilization") or h.endswith("cpu_user")
           or h.endswith("cpu_system") or h.endswith("cpu_iowait") or h.endswith(".io_wait")]
    block = values[:, pct]
    in_range = np.all(np.isnan(block) | ((block >= 0) & (block <= 100)))
    checks.append(Check("utilization_range", bool(in_range), f"{len(pct)} percentage columns within [0, 100]"))
    return checks
