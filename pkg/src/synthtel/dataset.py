"""Ground truth, downsampling and the exported dataset files."""

from __future__ import annotations

import csv
import json
import os
import re
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cluster import ClusterTopology
from .faults import Experiment
from .load_anomaly import LoadAnomalyLabel
from .metrics import NODE_METRICS, POD_METRICS, SERVICE_METRICS, MetricSpec, metric_columns

GT_COLUMNS = ("load_anomaly_gt", "fis_anomaly_gt", "anomaly_gt")
FILES = ("metrics.csv", "fis_experiments.csv", "load_anomalies.csv", "topology.json", "schema.md")


@dataclass
class GroundTruth:
    load_anomaly_gt: np.ndarray
    fis_anomaly_gt: np.ndarray
    anomaly_gt: np.ndarray

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.load_anomaly_gt, self.fis_anomaly_gt, self.anomaly_gt])


def _interval_mask(intervals, n_rows: int, window: int) -> np.ndarray:
    """Rows whose tick window ``[k*w, (k+1)*w)`` meets an inclusive tick interval."""
    mask = np.zeros(n_rows, dtype=bool)
    for start, end in intervals:
        lo = max(start, 0) // window
        hi = min(end // window, n_rows - 1)
        if lo <= hi:
            mask[lo : hi + 1] = True
    return mask


def build_ground_truth(
    load_labels: Sequence[LoadAnomalyLabel],
    experiments: Sequence[Experiment],
    n_rows: int,
    window_ticks: int,
) -> GroundTruth:
    load = _interval_mask(((lab.start_tick, lab.end_tick) for lab in load_labels), n_rows, window_ticks)
    fis = _interval_mask(((e.start_tick, e.end_tick) for e in experiments), n_rows, window_ticks)
    return GroundTruth(load, fis, load | fis)


class Downsampler:
    """Reduce tick rows to sampling windows: gauges by mean, counters by sum,
    cumulative counters by last value. NaN ticks are skipped; an all-NaN
    window stays NaN. Partial windows carry over to the next push."""

    def __init__(self, aggregations: Sequence[str], window: int):
        aggs = np.asarray(aggregations)
        bad = set(aggs) - {"mean", "sum", "last"}
        if bad:
            raise ValueError(f"unknown aggregation(s): {sorted(bad)}")
        self.window = int(window)
        self.mean = np.flatnonzero(aggs == "mean")
        self.sum = np.flatnonzero(aggs == "sum")
        self.last = np.flatnonzero(aggs == "last")
        self.n_cols = len(aggs)
        self._pending: np.ndarray | None = None

    def push(self, block: np.ndarray) -> np.ndarray:
        if self._pending is not None and len(self._pending):
            block = np.concatenate([self._pending, block])
        n_full = len(block) // self.window
        cut = n_full * self.window
        self._pending = block[cut:]
        w = block[:cut].reshape(n_full, self.window, self.n_cols)
        out = np.empty((n_full, self.n_cols))
        for idx, mean in ((self.mean, True), (self.sum, False)):
            part = w[:, :, idx]
            present = ~np.isnan(part)
            count = present.sum(axis=1)
            total = np.where(present, part, 0.0).sum(axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                val = total / count if mean else total
            out[:, idx] = np.where(count > 0, val, np.nan)
        out[:, self.last] = w[:, -1, self.last]
        return out


@dataclass
class MetricFrame:
    """The wide dataset plus the manifests exported next to it."""

    timestamps: np.ndarray  # seconds since run start
    columns: list[str]
    values: np.ndarray  # (rows, metric columns)
    ground_truth: GroundTruth
    sampling_interval: int
    tick_seconds: int
    topology: ClusterTopology
    experiments: list[Experiment] = field(default_factory=list)
    load_labels: list[LoadAnomalyLabel] = field(default_factory=list)
    restarts: list = field(default_factory=list)

    @property
    def header(self) -> list[str]:
        return ["timestamp", *self.columns, *GT_COLUMNS]

    @property
    def n_data_columns(self) -> int:
        return len(self.columns) + len(GT_COLUMNS)


def _fmt(v: float) -> str:
    if v != v:
        return ""
    # +0.0 folds negative zero
    return format(v + 0.0, ".6g")


def _write_metrics(path: Path, frame: MetricFrame) -> None:
    gt = frame.ground_truth.as_matrix().astype(int)
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(",".join(frame.header) + "\n")
        for ts, row, g in zip(frame.timestamps.tolist(), frame.values.tolist(), gt.tolist()):
            fh.write(str(int(ts)))
            fh.write(",")
            fh.write(",".join(map(_fmt, row)))
            fh.write(",%d,%d,%d\n" % tuple(g))


def experiment_rows(experiments: Sequence[Experiment]) -> list[list[str]]:
    rows = []
    for e in experiments:
        params = ";".join(f"{k}={_fmt(float(v))}" for k, v in sorted(e.parameters.items()))
        rows.append([e.experiment_id, e.kind.value, e.target_type, "|".join(e.targets),
                     str(e.start_tick), str(e.end_tick), params])
    return rows


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def schema_markdown(frame: MetricFrame) -> str:
    lines = [
        "# Dataset schema",
        "",
        f"- tick_seconds: {frame.tick_seconds}",
        f"- sampling_interval: {frame.sampling_interval}",
        f"- rows: {len(frame.timestamps)}",
        f"- data_columns: {frame.n_data_columns}",
        "",
        "Columns of metrics.csv: `timestamp` (seconds since run start, window start), then",
        "`<entity_type>.<entity_id>.<metric_name>` for every node, pod and service in",
        "topology.json order, then the three ground-truth columns. Empty cells mean the",
        "entity was down for the whole window. Ticks map to windows by",
        "`row = tick * tick_seconds // sampling_interval`.",
        "",
    ]
    for title, specs in (("Node", NODE_METRICS), ("Pod", POD_METRICS), ("Service", SERVICE_METRICS)):
        lines += [
            f"## {title} metrics",
            "",
            "| metric | unit | aggregation | description |",
            "|---|---|---|---|",
        ]
        lines += [f"| {m.name} | {m.unit} | {m.aggregation} | {m.description} |" for m in specs]
        lines.append("")
    lines += [
        "## Ground truth",
        "",
        "| column | meaning |",
        "|---|---|",
        "| load_anomaly_gt | window overlaps a row of load_anomalies.csv |",
        "| fis_anomaly_gt | window overlaps a row of fis_experiments.csv |",
        "| anomaly_gt | load_anomaly_gt OR fis_anomaly_gt |",
        "",
    ]
    return "\n".join(lines)


_ROW = re.compile(r"^\|\s*([a-z0-9_]+)\s*\|\s*([^|]*?)\s*\|\s*(mean|sum|last)\s*\|")


def parse_schema(text: str) -> dict:
    """Inverse of :func:`schema_markdown` for what validation needs."""
    info: dict = {"Node": [], "Pod": [], "Service": []}
    section = None
    for line in text.splitlines():
        if line.startswith("- ") and ":" in line:
            key, _, val = line[2:].partition(":")
            info[key.strip()] = int(val.strip())
        elif line.startswith("## "):
            section = line[3:].split()[0]
        elif section in ("Node", "Pod", "Service"):
            m = _ROW.match(line)
            if m:
                info[section].append(MetricSpec(m.group(1), m.group(2), m.group(3)))
    return info


def header_from_schema(topology: ClusterTopology, schema: dict) -> list[str]:
    cols = ["timestamp"]
    cols += [f"node.{n.node_id}.{m.name}" for n in topology.nodes for m in schema["Node"]]
    cols += [f"pod.{p.pod_id}.{m.name}" for p in topology.pods for m in schema["Pod"]]
    cols += [f"service.{s}.{m.name}" for s in topology.services for m in schema["Service"]]
    return [*cols, *GT_COLUMNS]


def export_dataset(frame: MetricFrame, out_dir: str | Path) -> list[Path]:
    """Write the five dataset files into ``out_dir``.

    Files are staged in a temporary directory next to the targets and moved
    into place only once all of them are written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".partial-", dir=out))
    try:
        _write_metrics(stage / "metrics.csv", frame)
        _write_csv(
            stage / "fis_experiments.csv",
            ("experiment_id", "kind", "target_type", "target", "start_tick", "end_tick", "parameters"),
            experiment_rows(frame.experiments),
        )
        _write_csv(
            stage / "load_anomalies.csv",
            ("start_tick", "end_tick", "multiplier"),
            ([lab.start_tick, lab.end_tick, _fmt(lab.multiplier)] for lab in frame.load_labels),
        )
        (stage / "topology.json").write_text(
            json.dumps(frame.topology.to_dict(), indent=2, sort_keys=True) + "\n", encoding="ascii"
        )
        (stage / "schema.md").write_text(schema_markdown(frame), encoding="ascii")
        paths = []
        for name in FILES:
            os.replace(stage / name, out / name)
            paths.append(out / name)
        return paths
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def metric_frame_columns(topology: ClusterTopology) -> list[str]:
    return ["timestamp", *metric_columns(topology), *GT_COLUMNS]
