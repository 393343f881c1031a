"""Seeded simulator for labeled microservice-cluster telemetry datasets."""

from .cluster import ClusterTopology, Node, Pod, build_default_topology, build_topology, reschedule_pod
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .dataset import GroundTruth, MetricFrame, build_ground_truth, export_dataset
from .faults import Experiment, ExperimentTemplate, FaultKind, default_template_catalog, schedule_experiments
from .load import (
    LoadConfig,
    LoadProfile,
    SeasonalComponent,
    TrendConfig,
    TrendProfile,
    decompose_load,
    generate_load,
    generate_trend,
    spawn_rate,
)
from .load_anomaly import LoadAnomalyConfig, LoadAnomalyLabel, expected_anomaly_count, inject_load_anomalies
from .metrics import ClusterTimeline, MetricsEngine, ResponseModel
from .pipeline import PipelineError, RunSummary, build_frame, decompose_to_dir, run_pipeline
from .scenarios import DEFAULT_SCENARIOS, ScenarioKind, ScenarioMix, UserScenario, service_request_rates
from .validate import validate_dataset

__version__ = "0.1.0"
