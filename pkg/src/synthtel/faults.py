"""Fault-injection experiments: template catalog, per-minute scheduling, queries."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from ._rng import as_rng
from .cluster import ClusterTopology, select_random_target


class FaultKind(str, Enum):
    CPU_STRESS = "cpu_stress"
    MEMORY_STRESS = "memory_stress"
    NETWORK_LATENCY = "network_latency"
    PACKET_DROP = "packet_drop"
    IO_STRESS = "io_stress"
    POD_DELETE = "pod_delete"
    NODE_REBOOT = "node_reboot"


POD_ONLY = {FaultKind.POD_DELETE}
NODE_ONLY = {FaultKind.NODE_REBOOT}
INSTANTANEOUS = {FaultKind.POD_DELETE, FaultKind.NODE_REBOOT}
# node-level faults of these kinds also hit every pod resident on the node
PROPAGATES_TO_PODS = {FaultKind.NETWORK_LATENCY, FaultKind.PACKET_DROP}

ALLOWED_PARAMETERS: dict[FaultKind, frozenset[str]] = {
    FaultKind.CPU_STRESS: frozenset({"duration", "load_percent"}),
    FaultKind.MEMORY_STRESS: frozenset({"duration", "load_percent"}),
    FaultKind.NETWORK_LATENCY: frozenset({"duration", "latency_ms"}),
    FaultKind.PACKET_DROP: frozenset({"duration", "drop_percent"}),
    FaultKind.IO_STRESS: frozenset({"duration", "io_percent"}),
    FaultKind.POD_DELETE: frozenset(),
    FaultKind.NODE_REBOOT: frozenset(),
}

TARGET_PLACEHOLDER = {"node": "${ec2-target}", "pod": "${pod-target}"}


@dataclass(frozen=True)
class ExperimentTemplate:
    kind: FaultKind
    target_type: str  # "node" | "pod"
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.target_type not in ("node", "pod"):
            raise ValueError(f"target_type must be 'node' or 'pod', got {self.target_type!r}")
        if self.kind in POD_ONLY and self.target_type != "pod":
            raise ValueError(f"{self.kind.value} targets pods only")
        if self.kind in NODE_ONLY and self.target_type != "node":
            raise ValueError(f"{self.kind.value} targets nodes only")
        if set(self.parameters) != ALLOWED_PARAMETERS[self.kind]:
            raise ValueError(
                f"{self.kind.value} takes parameters {sorted(ALLOWED_PARAMETERS[self.kind])}, "
                f"got {sorted(self.parameters)}"
            )

    @property
    def name(self) -> str:
        return f"{self.kind.value}-{self.target_type}"

    @property
    def target_placeholder(self) -> str:
        return TARGET_PLACEHOLDER[self.target_type]


@dataclass(frozen=True)
class Experiment:
    experiment_id: str
    template: ExperimentTemplate
    targets: tuple[str, ...]  # resource names for nodes, pod ids for pods
    entity_ids: tuple[str, ...]  # node ids / pod ids
    start_tick: int
    end_tick: int  # inclusive

    def __post_init__(self) -> None:
        if self.start_tick > self.end_tick:
            raise ValueError(f"{self.experiment_id}: start after end")

    @property
    def kind(self) -> FaultKind:
        return self.template.kind

    @property
    def target_type(self) -> str:
        return self.template.target_type

    @property
    def parameters(self) -> Mapping[str, float]:
        return self.template.parameters

    def active(self, t: int) -> bool:
        return self.start_tick <= t <= self.end_tick


def default_template_catalog(
    cpu_load: float = 100,
    cpu_duration: int = 240,
    mem_load: float = 100,
    mem_duration: int = 240,
    latency_ms: float = 400,
    latency_duration: int = 300,
    drop_percent: float = 40,
    drop_duration: int = 120,
    io_percent: float = 80,
    io_duration: int = 300,
) -> list[ExperimentTemplate]:
    """Twelve templates: five dual-target kinds in node and pod variants,
    plus pod deletion and node reboot. Durations are in seconds."""
    dual = [
        (FaultKind.CPU_STRESS, {"duration": cpu_duration, "load_percent": cpu_load}),
        (FaultKind.MEMORY_STRESS, {"duration": mem_duration, "load_percent": mem_load}),
        (FaultKind.NETWORK_LATENCY, {"duration": latency_duration, "latency_ms": latency_ms}),
        (FaultKind.PACKET_DROP, {"duration": drop_duration, "drop_percent": drop_percent}),
        (FaultKind.IO_STRESS, {"duration": io_duration, "io_percent": io_percent}),
    ]
    catalog = []
    for kind, params in dual:
        for target_type in ("node", "pod"):
            catalog.append(ExperimentTemplate(kind, target_type, dict(params)))
    catalog.append(ExperimentTemplate(FaultKind.POD_DELETE, "pod"))
    catalog.append(ExperimentTemplate(FaultKind.NODE_REBOOT, "node"))
    return catalog


def experiment_span(
    template: ExperimentTemplate, *, tick_seconds: int = 1, restart_delay: int = 30, reboot_window: int = 120
) -> int:
    """Ticks from start to (inclusive) end for an experiment of this template."""
    if template.kind is FaultKind.POD_DELETE:
        seconds = restart_delay
    elif template.kind is FaultKind.NODE_REBOOT:
        seconds = reboot_window
    else:
        seconds = template.parameters["duration"]
    return int(seconds) // tick_seconds


def make_experiment(
    experiment_id: str,
    template: ExperimentTemplate,
    topology: ClusterTopology,
    targets: Sequence[str],
    start_tick: int,
    **span_kw,
) -> Experiment:
    """Resolve ``template`` against explicit targets (resource names or pod ids)."""
    if template.target_type == "node":
        entity_ids = tuple(topology.node_by_resource(r).node_id for r in targets)
    else:
        entity_ids = tuple(topology.pod(p).pod_id for p in targets)
    end = start_tick + experiment_span(template, **span_kw)
    return Experiment(experiment_id, template, tuple(targets), entity_ids, start_tick, end)


def schedule_experiments(
    catalog: Sequence[ExperimentTemplate],
    topology: ClusterTopology,
    p_anomaly: float,
    horizon: int,
    rng=None,
    *,
    tick_seconds: int = 1,
    targets_per_experiment: int = 1,
    restart_delay: int = 30,
    reboot_window: int = 120,
) -> list[Experiment]:
    """At each minute boundary in ``[0, horizon)`` deploy, with probability
    ``p_anomaly``, one uniformly chosen template against random target(s).

    Experiments may overlap, including on the same target.
    """
    if not catalog:
        raise ValueError("template catalog is empty")
    if not 0 <= p_anomaly <= 1:
        raise ValueError("p_anomaly must be in [0, 1]")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if 60 % tick_seconds:
        raise ValueError("tick_seconds must divide 60")
    rng = as_rng(rng)
    minute = 60 // tick_seconds
    boundaries = np.arange(0, horizon, minute)
    hits = boundaries[rng.random(len(boundaries)) < p_anomaly]
    experiments = []
    for i, start in enumerate(hits):
        template = catalog[int(rng.integers(len(catalog)))]
        targets = select_random_target(
            topology, template.target_type, targets_per_experiment, rng
        )
        experiments.append(
            make_experiment(
                f"exp-{i + 1:05d}",
                template,
                topology,
                targets,
                int(start),
                tick_seconds=tick_seconds,
                restart_delay=restart_delay,
                reboot_window=reboot_window,
            )
        )
    return experiments


def active_faults(
    experiments: Sequence[Experiment],
    entity_id: str,
    t: int,
    topology: ClusterTopology | None = None,
) -> list[tuple[FaultKind, Mapping[str, float]]]:
    """Faults acting on ``entity_id`` at tick ``t``, ordered by start tick.

    With a topology, a pod also picks up network faults aimed at the node it
    currently sits on.
    """
    host = None
    if topology is not None:
        try:
            host = topology.pod(entity_id).node_id
        except KeyError:
            host = None
    hits = []
    for exp in experiments:
        if not exp.active(t):
            continue
        if entity_id in exp.entity_ids or (
            host is not None
            and exp.target_type == "node"
            and exp.kind in PROPAGATES_TO_PODS
            and host in exp.entity_ids
        ):
            hits.append(exp)
    hits.sort(key=lambda e: e.start_tick)
    return [(e.kind, e.parameters) for e in hits]


def with_template_overrides(
    catalog: Sequence[ExperimentTemplate], overrides: Mapping[str, Mapping[str, float]]
) -> list[ExperimentTemplate]:
    """Replace parameters per fault kind (``{"cpu_stress": {"duration": 60}}``)."""
    unknown = set(overrides) - {k.value for k in FaultKind}
    if unknown:
        raise ValueError(f"unknown fault kind(s): {', '.join(sorted(unknown))}")
    out = []
    for tpl in catalog:
        extra = overrides.get(tpl.kind.value)
        if extra:
            tpl = replace(tpl, parameters={**tpl.parameters, **extra})
        out.append(tpl)
    return out
