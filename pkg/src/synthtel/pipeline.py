"""End-to-end generation: load -> anomalies -> experiments -> metrics -> files."""

from __future__ import annotations

import contextlib
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import substream
from .config import RunConfig
from .dataset import Downsampler, MetricFrame, build_ground_truth, export_dataset
from .faults import schedule_experiments
from .load import decompose_load, generate_load, generate_trend
from .load_anomaly import inject_load_anomalies
from .metrics import MetricsEngine

logger = logging.getLogger(__name__)

# substream keys per stage; the metrics engine keys its own streams by entity
TREND_STREAM, NOISE_STREAM, LOAD_ANOMALY_STREAM, FAULT_STREAM = 101, 102, 103, 104


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except OSError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


@dataclass(frozen=True)
class RunSummary:
    out_dir: Path
    rows: int
    columns: int  # data columns, timestamp excluded
    experiments: int
    load_anomalies: int
    restarts: int
    wall_time: float

    def __str__(self) -> str:
        return (
            f"{self.rows} rows x {self.columns} data columns, {self.experiments} experiments, "
            f"{self.load_anomalies} load anomalies, {self.restarts} pod restarts "
            f"-> {self.out_dir} ({self.wall_time:.1f} s)"
        )


def build_frame(cfg: RunConfig) -> MetricFrame:
    """Run every generation stage and return the in-memory dataset."""
    seed = cfg.seed
    with _stage("load-model"):
        trend = generate_trend(cfg.load.trend, cfg.load.duration, substream(seed, TREND_STREAM))
        profile = generate_load(cfg.load, trend, substream(seed, NOISE_STREAM))
    with _stage("load-anomaly"):
        loaded, labels, _ = inject_load_anomalies(profile, cfg.load_anomaly, substream(seed, LOAD_ANOMALY_STREAM))
    horizon = cfg.n_rows * cfg.window_ticks
    with _stage("cluster-model"):
        topology = cfg.topology.build()
    with _stage("fault-injector"):
        experiments = schedule_experiments(
            cfg.faults.catalog(),
            topology,
            cfg.faults.p_anomaly,
            horizon,
            substream(seed, FAULT_STREAM),
            tick_seconds=cfg.tick_seconds,
            targets_per_experiment=cfg.faults.targets_per_experiment,
            restart_delay=cfg.response.restart_delay,
            reboot_window=cfg.response.reboot_window,
        )
    with _stage("metrics-engine"):
        engine = MetricsEngine(
            topology,
            loaded.users,
            experiments,
            mix=cfg.mix,
            scenarios=cfg.scenarios,
            response=cfg.response,
            seed=seed,
            tick_seconds=cfg.tick_seconds,
            horizon=horizon,
        )
        down = Downsampler(engine.aggregations, cfg.window_ticks)
        values = np.concatenate([down.push(block) for _, block in engine.iter_blocks()])
    with _stage("dataset-pipeline"):
        gt = build_ground_truth(labels, experiments, cfg.n_rows, cfg.window_ticks)
        frame = MetricFrame(
            timestamps=np.arange(cfg.n_rows) * cfg.sampling_interval,
            columns=engine.columns,
            values=values,
            ground_truth=gt,
            sampling_interval=cfg.sampling_interval,
            tick_seconds=cfg.tick_seconds,
            topology=topology,
            experiments=experiments,
            load_labels=labels,
            restarts=list(engine.timeline.restarts),
        )
    return frame


def run_pipeline(cfg: RunConfig, out_dir: str | Path | None = None) -> RunSummary:
    start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    frame = build_frame(cfg)
    export_dataset(frame, out)
    summary = RunSummary(
        out_dir=out,
        rows=len(frame.timestamps),
        columns=frame.n_data_columns,
        experiments=len(frame.experiments),
        load_anomalies=len(frame.load_labels),
        restarts=len(frame.restarts),
        wall_time=time.perf_counter() - start,
    )
    logger.info("generated %s", summary)
    return summary


def decompose_to_dir(cfg: RunConfig, out_dir: str | Path) -> list[Path]:
    """Write the load decomposition for ``cfg`` (same streams as ``generate``).

    Files: trend.csv, seasonal_<k>.csv, noise_<k>.csv (k from 1), total.csv;
    each has columns ``tick,value``. ``total`` is the raw load before rounding.
    """
    trend = generate_trend(cfg.load.trend, cfg.load.duration, substream(cfg.seed, TREND_STREAM))
    dec = decompose_load(cfg.load, trend, substream(cfg.seed, NOISE_STREAM))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = {"trend": dec.trend}
    for k in range(len(dec.seasonal)):
        series[f"seasonal_{k + 1}"] = dec.seasonal[k]
        series[f"noise_{k + 1}"] = dec.noise[k]
    series["total"] = dec.total
    ticks = np.arange(cfg.load.duration)
    paths = []
    for name, values in series.items():
        path = out / f"{name}.csv"
        np.savetxt(path, np.column_stack([ticks, values]), fmt=("%d", "%.17g"), delimiter=",",
                   header="tick,value", comments="")
        paths.append(path)
    return paths
