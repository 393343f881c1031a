"""Metric synthesis for nodes, pods and services.

Two passes. :class:`ClusterTimeline` walks fault events in time order and
resolves everything stateful and discrete: pod placement, restarts (in place
after sustained packet loss, elsewhere after deletion or node reboot) and down
windows. :class:`MetricsEngine` then evaluates the response models over fixed
blocks of ticks, vectorized over time.

Randomness comes from substreams keyed by (seed, entity, block), so a fault on
one entity never shifts the noise of another, and paired runs that differ only
in their faults share jitter wherever the faults do not reach.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np
from scipy.signal import lfilter

from ._rng import substream
from .cluster import MIB, ClusterTopology, RescheduleEvent, reschedule_pod
from .faults import INSTANTANEOUS, PROPAGATES_TO_PODS, Experiment, FaultKind
from .scenarios import DEFAULT_SCENARIOS, ScenarioMix, request_coefficients


@dataclass(frozen=True)
class MetricSpec:
    name: str
    unit: str
    aggregation: str  # mean | sum | last
    description: str = ""


NODE_METRICS: tuple[MetricSpec, ...] = (
    MetricSpec("cpu_utilization", "percent", "mean", "total CPU busy"),
    MetricSpec("cpu_user", "percent", "mean", "CPU in user mode"),
    MetricSpec("cpu_system", "percent", "mean", "CPU in kernel mode"),
    MetricSpec("cpu_iowait", "percent", "mean", "CPU waiting on I/O"),
    MetricSpec("load_average_1m", "runnable", "mean", "one-minute load average"),
    MetricSpec("mem_utilization", "percent", "mean", "memory used over capacity"),
    MetricSpec("mem_used_bytes", "bytes", "mean"),
    MetricSpec("mem_cached_bytes", "bytes", "mean"),
    MetricSpec("mem_available_bytes", "bytes", "mean"),
    MetricSpec("net_rx_bytes", "bytes", "sum"),
    MetricSpec("net_tx_bytes", "bytes", "sum"),
    MetricSpec("net_rx_packets", "packets", "sum"),
    MetricSpec("net_tx_packets", "packets", "sum"),
    MetricSpec("net_rx_dropped", "packets", "sum"),
    MetricSpec("net_tx_dropped", "packets", "sum"),
    MetricSpec("disk_read_bytes", "bytes", "sum"),
    MetricSpec("disk_write_bytes", "bytes", "sum"),
    MetricSpec("disk_read_ops", "ops", "sum"),
    MetricSpec("disk_write_ops", "ops", "sum"),
    MetricSpec("disk_io_time_ms", "ms", "sum", "time the disk spent busy"),
    MetricSpec("filesystem_utilization", "percent", "mean"),
    MetricSpec("running_pods", "pods", "mean"),
    MetricSpec("container_cpu_utilization", "percent", "mean", "pods' CPU over node capacity"),
    MetricSpec("container_mem_utilization", "percent", "mean", "pods' memory over node capacity"),
    MetricSpec("context_switches", "switches", "sum"),
)

POD_METRICS: tuple[MetricSpec, ...] = (
    MetricSpec("cpu_utilization", "percent", "mean", "CPU over the pod limit"),
    MetricSpec("cpu_usage_millicores", "millicores", "mean"),
    MetricSpec("mem_utilization", "percent", "mean", "working set over the pod limit"),
    MetricSpec("mem_working_set_bytes", "bytes", "mean"),
    MetricSpec("net_rx_bytes", "bytes", "sum"),
    MetricSpec("net_tx_bytes", "bytes", "sum"),
    MetricSpec("net_rx_packets", "packets", "sum"),
    MetricSpec("net_tx_packets", "packets", "sum"),
    MetricSpec("net_rx_dropped", "packets", "sum"),
    MetricSpec("net_tx_dropped", "packets", "sum"),
    MetricSpec("fs_read_bytes", "bytes", "sum"),
    MetricSpec("fs_write_bytes", "bytes", "sum"),
    MetricSpec("io_wait", "percent", "mean"),
    MetricSpec("request_count", "requests", "sum"),
    MetricSpec("failed_requests", "requests", "sum"),
    MetricSpec("p95_latency_ms", "ms", "mean", "95th percentile response time of requests served"),
    MetricSpec("restart_count", "restarts", "last", "cumulative container restarts"),
    MetricSpec("ready", "fraction", "mean", "share of the window the pod was running"),
)

SERVICE_METRICS: tuple[MetricSpec, ...] = (
    MetricSpec("request_rate", "req/s", "mean"),
    MetricSpec("failed_requests", "requests", "sum"),
    MetricSpec("avg_latency_ms", "ms", "mean"),
    MetricSpec("p95_latency_ms", "ms", "mean"),
    MetricSpec("rx_bytes", "bytes", "sum"),
    MetricSpec("tx_bytes", "bytes", "sum"),
    MetricSpec("requests_4xx", "requests", "sum"),
    MetricSpec("requests_5xx", "requests", "sum"),
    MetricSpec("active_pods", "pods", "mean"),
)

# reported even while the pod is down (they come from the orchestrator, not a scrape)
POD_ALWAYS_REPORTED = {"restart_count", "ready"}


def metric_columns(topology: ClusterTopology) -> list[str]:
    """Wide-frame metric columns, ``<entity_type>.<entity_id>.<metric>``."""
    cols = [f"node.{n.node_id}.{m.name}" for n in topology.nodes for m in NODE_METRICS]
    cols += [f"pod.{p.pod_id}.{m.name}" for p in topology.pods for m in POD_METRICS]
    cols += [f"service.{s}.{m.name}" for s in topology.services for m in SERVICE_METRICS]
    return cols


def metric_aggregations(topology: ClusterTopology) -> list[str]:
    aggs = [m.aggregation for _ in topology.nodes for m in NODE_METRICS]
    aggs += [m.aggregation for _ in topology.pods for m in POD_METRICS]
    aggs += [m.aggregation for _ in topology.services for m in SERVICE_METRICS]
    return aggs


@dataclass(frozen=True)
class ServiceProfile:
    base_cpu: float = 5.0  # % of the pod CPU limit when idle
    cpu_per_rps: float = 1.0
    base_mem_mb: float = 150.0
    mem_mb_per_rps: float = 0.2
    base_latency_ms: float = 20.0
    request_bytes: float = 800.0
    response_bytes: float = 4000.0
    fs_read_bps: float = 2_000.0
    fs_write_bps: float = 6_000.0


DEFAULT_PROFILES: dict[str, ServiceProfile] = {
    # base p95 = 48 * 2.5 = 120 ms
    "frontend": ServiceProfile(6.0, 1.2, 180.0, 0.3, 48.0, 900.0, 12_000.0, 1_000.0, 4_000.0),
    "catalogue": ServiceProfile(4.0, 1.0, 90.0, 0.2, 25.0, 600.0, 6_000.0),
    "cart": ServiceProfile(5.0, 1.5, 250.0, 0.3, 30.0, 700.0, 2_000.0),
    "orders": ServiceProfile(5.0, 2.0, 260.0, 0.4, 60.0, 1_200.0, 2_500.0),
    "payment": ServiceProfile(3.0, 1.5, 60.0, 0.1, 40.0, 500.0, 400.0),
    "shipping": ServiceProfile(4.0, 1.2, 200.0, 0.2, 35.0, 500.0, 400.0),
    "user": ServiceProfile(3.0, 1.5, 80.0, 0.2, 30.0, 700.0, 900.0),
    "login": ServiceProfile(3.0, 1.5, 80.0, 0.2, 30.0, 600.0, 700.0),
    "catalogue-db": ServiceProfile(8.0, 0.8, 400.0, 0.5, 8.0, 300.0, 5_000.0, 40_000.0, 10_000.0),
    "orders-db": ServiceProfile(8.0, 1.0, 420.0, 0.5, 10.0, 900.0, 1_500.0, 20_000.0, 60_000.0),
}


@dataclass(frozen=True)
class ResponseModel:
    """Every coefficient of the metric response models. Times in seconds
    unless the name says otherwise."""

    pod_cpu_jitter: float = 1.5  # percentage points, 1 sigma
    pod_mem_jitter_mb: float = 0.5
    latency_jitter: float = 0.05  # log-normal sigma
    node_cpu_jitter: float = 1.0
    node_mem_jitter_mb: float = 2.0
    memory_time_constant: float = 1800.0
    load_average_time_constant: float = 60.0
    p95_factor: float = 2.5
    cpu_contention: float = 0.5  # latency inflation at 100% CPU
    latency_rate_sensitivity: float = 4.0  # round trips per scenario loop that feel injected delay
    retransmit_penalty_ms: float = 200.0  # added mean latency per unit packet-loss fraction
    probe_packets: int = 2  # liveness probe fails if any of its packets is lost
    restart_failure_threshold: float = 0.5
    restart_sustain_seconds: int = 60
    restart_delay: int = 30
    reboot_window: int = 120
    memory_stress_cpu: float = 15.0
    io_stress_cpu: float = 5.0
    io_stress_wait: float = 40.0  # io_wait percent at 100% I/O stress
    io_stress_bps: float = 40e6
    base_io_wait: float = 0.5
    server_error_rate: float = 0.001
    client_error_rate: float = 0.01
    packet_bytes: float = 1400.0
    node_system_cpu: float = 4.0
    node_system_mem_mb: float = 1200.0
    node_cached_mem_mb: float = 900.0
    node_net_overhead_bps: float = 3_000.0
    node_disk_read_bps: float = 20_000.0
    node_disk_write_bps: float = 60_000.0
    disk_op_bytes: float = 4096.0
    disk_op_ms: float = 0.2
    filesystem_base: float = 35.0
    filesystem_growth_per_day: float = 0.3
    context_switch_base: float = 2_500.0
    context_switch_per_request: float = 30.0
    profiles: Mapping[str, ServiceProfile] = field(default_factory=lambda: dict(DEFAULT_PROFILES))

    def profile(self, service: str) -> ServiceProfile:
        return self.profiles.get(service, ServiceProfile())


@dataclass(frozen=True)
class MetricSample:
    tick: int
    entity_id: str
    metric_name: str
    value: float


@dataclass(frozen=True)
class RestartEvent:
    tick: int
    pod_id: str
    cause: str  # fault | pod_delete | node_reboot
    old_node: str
    new_node: str


NodeCpuFn = Callable[[int, ClusterTopology, np.ndarray], Mapping[str, float]]


class ClusterTimeline:
    """Placement, restarts and down windows over ``[0, horizon)``."""

    def __init__(self, topology: ClusterTopology, horizon: int, response: ResponseModel, tick_seconds: int = 1):
        self.initial = topology
        self.live = copy.deepcopy(topology)
        self.horizon = horizon
        self.response = response
        self.tick_seconds = tick_seconds
        self.pod_index = {p.pod_id: i for i, p in enumerate(topology.pods)}
        self.node_index = {n.node_id: i for i, n in enumerate(topology.nodes)}
        P, N = len(topology.pods), len(topology.nodes)
        self.pod_up = np.ones((P, horizon), dtype=bool)
        self.node_up = np.ones((N, horizon), dtype=bool)
        self.placement = np.empty((P, horizon), dtype=np.int16)
        self.restarts: list[RestartEvent] = []
        self.reschedules: list[RescheduleEvent] = []
        self._moves: list[list[tuple[int, int]]] = [
            [(0, self.node_index[p.node_id])] for p in topology.pods
        ]
        self.restart_ticks: list[np.ndarray] = [np.empty(0, dtype=np.int64) for _ in range(P)]

    @property
    def restart_delay_ticks(self) -> int:
        return max(1, self.response.restart_delay // self.tick_seconds)

    @property
    def reboot_ticks(self) -> int:
        return max(1, self.response.reboot_window // self.tick_seconds)

    def _down(self, pod_id: str, t: int, ticks: int) -> None:
        self.pod_up[self.pod_index[pod_id], t : min(t + ticks, self.horizon)] = False

    def apply_restart(
        self,
        pod_id: str,
        t: int,
        *,
        cause: str = "fault",
        node_cpu: Mapping[str, float] | None = None,
        exclude: frozenset[str] = frozenset(),
    ) -> RestartEvent:
        """Restart a pod at tick ``t``.

        ``cause="fault"`` restarts the container where it is; ``pod_delete`` and
        ``node_reboot`` reschedule it to another node. Either way the restart
        counter goes up and the pod is down for the restart delay.
        """
        pod = self.live.pod(pod_id)
        old = pod.node_id
        if cause == "fault":
            pod.restart_count += 1
        else:
            ev = reschedule_pod(
                self.live, pod_id, t, node_cpu=node_cpu, exclude=exclude,
                restart_delay=self.restart_delay_ticks,
            )
            self.reschedules.append(ev)
            if ev.new_node != old:
                self._moves[self.pod_index[pod_id]].append((t, self.node_index[ev.new_node]))
        self._down(pod_id, t, self.restart_delay_ticks)
        event = RestartEvent(t, pod_id, cause, old, pod.node_id)
        self.restarts.append(event)
        return event

    def reboot_node(self, node_id: str, t: int, node_cpu: Mapping[str, float] | None = None) -> list[RestartEvent]:
        n = self.node_index[node_id]
        self.node_up[n, t : min(t + self.reboot_ticks, self.horizon)] = False
        exclude = frozenset(
            nid for nid, i in self.node_index.items() if not self.node_up[i, t]
        )
        events = []
        for pod in list(self.live.resident_pods(node_id)):
            ev = self.apply_restart(pod.pod_id, t, cause="node_reboot", node_cpu=node_cpu, exclude=exclude)
            if ev.new_node == node_id:
                # nowhere else to go: back once the node is
                self._down(pod.pod_id, t, self.reboot_ticks)
            events.append(ev)
        return events

    def _finalize(self) -> None:
        for i, moves in enumerate(self._moves):
            for j, (start, node) in enumerate(moves):
                end = moves[j + 1][0] if j + 1 < len(moves) else self.horizon
                self.placement[i, start:end] = node
        by_pod: dict[int, list[int]] = {}
        for ev in self.restarts:
            by_pod.setdefault(self.pod_index[ev.pod_id], []).append(ev.tick)
        for i, ticks in by_pod.items():
            self.restart_ticks[i] = np.sort(np.asarray(ticks, dtype=np.int64))

    def restart_counts(self, pod_idx: int, c0: int, c1: int) -> np.ndarray:
        """Cumulative restarts of a pod at each tick of ``[c0, c1)``."""
        return np.searchsorted(self.restart_ticks[pod_idx], np.arange(c0, c1), side="right").astype(float)

    @classmethod
    def build(
        cls,
        topology: ClusterTopology,
        experiments: Sequence[Experiment],
        horizon: int,
        response: ResponseModel,
        tick_seconds: int = 1,
        node_cpu_fn: NodeCpuFn | None = None,
    ) -> ClusterTimeline:
        tl = cls(topology, horizon, response, tick_seconds)

        def cpu_at(t: int):
            return node_cpu_fn(t, tl.live, tl.pod_up[:, t]) if node_cpu_fn else None

        instants: dict[int, list[Experiment]] = {}
        drops = []
        visit: set[int] = set()
        for exp in experiments:
            if exp.start_tick >= horizon:
                continue
            if exp.kind in INSTANTANEOUS:
                instants.setdefault(exp.start_tick, []).append(exp)
                visit.add(exp.start_tick)
            elif exp.kind is FaultKind.PACKET_DROP:
                drops.append(exp)
                visit.update(range(exp.start_tick, min(exp.end_tick, horizon - 1) + 1))

        sustain = max(1, response.restart_sustain_seconds // tick_seconds)
        streak = dict.fromkeys(tl.pod_index, 0)
        last_fail = dict.fromkeys(tl.pod_index, -2)
        for t in sorted(visit):
            for exp in sorted(instants.get(t, ()), key=lambda e: e.experiment_id):
                if exp.kind is FaultKind.POD_DELETE:
                    for pod_id in exp.entity_ids:
                        down_nodes = frozenset(
                            nid for nid, i in tl.node_index.items() if not tl.node_up[i, t]
                        )
                        tl.apply_restart(pod_id, t, cause="pod_delete", node_cpu=cpu_at(t), exclude=down_nodes)
                else:
                    for node_id in exp.entity_ids:
                        tl.reboot_node(node_id, t, node_cpu=cpu_at(t))

            active = [e for e in drops if e.active(t)]
            if not active:
                continue
            for pod in tl.live.pods:
                level = 0.0
                for e in active:
                    if pod.pod_id in e.entity_ids or (e.target_type == "node" and pod.node_id in e.entity_ids):
                        level = max(level, e.parameters["drop_percent"] / 100.0)
                if level == 0.0 or not tl.pod_up[tl.pod_index[pod.pod_id], t]:
                    continue
                probe_failure = 1.0 - (1.0 - level) ** response.probe_packets
                if probe_failure < response.restart_failure_threshold:
                    continue
                pid = pod.pod_id
                streak[pid] = streak[pid] + 1 if last_fail[pid] == t - 1 else 1
                last_fail[pid] = t
                if streak[pid] >= sustain:
                    tl.apply_restart(pid, t, cause="fault")
                    streak[pid] = 0
                    last_fail[pid] = -2
        tl._finalize()
        return tl


def _ema(x: np.ndarray, alpha: float, state: float | None) -> tuple[np.ndarray, float]:
    """First-order low-pass ``y[n] = a*x[n] + (1-a)*y[n-1]``; ``state`` is y[-1]."""
    y_prev = x[0] if state is None else state
    y, zf = lfilter([alpha], [1.0, alpha - 1.0], x, zi=[(1.0 - alpha) * y_prev])
    return y, float(y[-1])


def _alpha(tick_seconds: float, tau: float) -> float:
    return 1.0 - math.exp(-tick_seconds / tau)


FAULT_LEVEL_PARAM = {
    FaultKind.CPU_STRESS: "load_percent",
    FaultKind.MEMORY_STRESS: "load_percent",
    FaultKind.NETWORK_LATENCY: "latency_ms",
    FaultKind.PACKET_DROP: "drop_percent",
    FaultKind.IO_STRESS: "io_percent",
}


def pod_response(
    profile: ServiceProfile,
    cpu_limit: float,
    mem_limit: float,
    offered_rate: np.ndarray,
    up: np.ndarray,
    faults: Mapping[FaultKind, np.ndarray],
    rng: np.random.Generator,
    rm: ResponseModel,
    *,
    think_time: float,
    tick_seconds: int = 1,
    mem_state: float | None = None,
) -> tuple[dict[str, np.ndarray], float]:
    """Tick arrays for one pod. Values for down ticks are computed but callers
    blank them; request counters are zero there.

    ``faults`` maps kind to per-tick level: percent for stresses, ms for
    latency, fraction for packet drop. Like kinds arrive already max-composed.
    """
    L = len(offered_rate)
    zeros = np.zeros(L)
    cpu_stress = faults.get(FaultKind.CPU_STRESS, zeros)
    mem_stress = faults.get(FaultKind.MEMORY_STRESS, zeros)
    latency = faults.get(FaultKind.NETWORK_LATENCY, zeros)
    drop = faults.get(FaultKind.PACKET_DROP, zeros)
    io = faults.get(FaultKind.IO_STRESS, zeros)

    n_cpu = rng.standard_normal(L)
    n_mem = rng.standard_normal(L)
    n_lat = rng.standard_normal(L)

    # injected delay stretches each user's loop, so fewer requests arrive
    slowdown = think_time / (think_time + rm.latency_rate_sensitivity * latency / 1000.0)
    rate = np.where(up, offered_rate * slowdown, 0.0)
    requests = rng.poisson(rate * tick_seconds)
    net_fail = rng.binomial(requests, drop)
    srv_err = rng.binomial(requests - net_fail, rm.server_error_rate)
    cli_err = rng.binomial(requests - net_fail - srv_err, rm.client_error_rate)

    cpu = profile.base_cpu + profile.cpu_per_rps * rate + rm.pod_cpu_jitter * n_cpu
    cpu = cpu + np.where(mem_stress > 0, rm.memory_stress_cpu, 0.0) + io / 100.0 * rm.io_stress_cpu
    cpu = np.where(cpu_stress > 0, np.maximum(cpu, cpu_stress), cpu)
    cpu = np.clip(cpu, 0.0, 100.0)

    ema, mem_state = _ema(rate, _alpha(tick_seconds, rm.memory_time_constant), mem_state)
    mem_mb = profile.base_mem_mb + profile.mem_mb_per_rps * ema + rm.pod_mem_jitter_mb * n_mem
    mem_util = np.clip(mem_mb * MIB / mem_limit * 100.0, 0.0, 100.0)
    mem_util = np.where(mem_stress > 0, np.maximum(mem_util, mem_stress), mem_util)
    working_set = mem_util / 100.0 * mem_limit

    req_pkts = math.ceil(profile.request_bytes / rm.packet_bytes)
    resp_pkts = math.ceil(profile.response_bytes / rm.packet_bytes)
    rx_drop = np.rint(requests * req_pkts * drop)
    tx_drop = np.rint(requests * resp_pkts * drop)

    # in-flight requests do not shrink under injected delay, so contention
    # follows offered demand when that exceeds what the pod actually serves
    demand = profile.base_cpu + profile.cpu_per_rps * np.where(up, offered_rate, 0.0) + rm.pod_cpu_jitter * n_cpu
    busy = np.clip(np.maximum(cpu, demand), 0.0, 100.0)
    base_lat = profile.base_latency_ms * (1.0 + rm.cpu_contention * (busy / 100.0) ** 2)
    base_lat = base_lat * np.exp(rm.latency_jitter * n_lat)
    loss_penalty = drop * rm.retransmit_penalty_ms

    out = {
        "cpu_utilization": cpu,
        "cpu_usage_millicores": cpu / 100.0 * cpu_limit * 1000.0,
        "mem_utilization": mem_util,
        "mem_working_set_bytes": working_set,
        "net_rx_bytes": requests * profile.request_bytes * (1.0 - drop),
        "net_tx_bytes": requests * profile.response_bytes * (1.0 - drop),
        "net_rx_packets": requests * req_pkts - rx_drop,
        "net_tx_packets": requests * resp_pkts - tx_drop,
        "net_rx_dropped": rx_drop,
        "net_tx_dropped": tx_drop,
        "fs_read_bytes": (profile.fs_read_bps + io / 100.0 * rm.io_stress_bps) * tick_seconds,
        "fs_write_bytes": (profile.fs_write_bps + io / 100.0 * rm.io_stress_bps) * tick_seconds,
        "io_wait": np.clip(rm.base_io_wait + io / 100.0 * rm.io_stress_wait, 0.0, 100.0),
        "request_count": requests.astype(float),
        "failed_requests": (net_fail + srv_err).astype(float),
        "p95_latency_ms": base_lat * rm.p95_factor + latency + loss_penalty * rm.p95_factor,
        # internal, consumed by service/node aggregation
        "_rate": rate,
        "_srv_err": srv_err.astype(float),
        "_cli_err": cli_err.astype(float),
        "_latency": base_lat + latency + loss_penalty,
        "_mem_mb": working_set / MIB,
        "_cpu_vcpu": cpu / 100.0 * cpu_limit,
    }
    return out, mem_state


def node_load_response(
    cpu_capacity: float,
    mem_capacity: float,
    resident: np.ndarray,
    pods: Mapping[str, np.ndarray],
    faults: Mapping[FaultKind, np.ndarray],
    rng: np.random.Generator,
    rm: ResponseModel,
    *,
    tick_seconds: int = 1,
    t0: int = 0,
    load_state: float | None = None,
) -> tuple[dict[str, np.ndarray], float]:
    """Node tick arrays from its resident pods.

    ``resident`` is a (pods, ticks) mask of pods running on this node; ``pods``
    maps metric -> (pods, ticks) arrays as produced by :func:`pod_response`,
    plus ``_cpu_limit`` (vCPU per pod row).
    """
    L = resident.shape[1]
    zeros = np.zeros(L)
    cpu_stress = faults.get(FaultKind.CPU_STRESS, zeros)
    mem_stress = faults.get(FaultKind.MEMORY_STRESS, zeros)
    drop = faults.get(FaultKind.PACKET_DROP, zeros)
    io = faults.get(FaultKind.IO_STRESS, zeros)

    n_cpu = rng.standard_normal(L)
    n_mem = rng.standard_normal(L)

    def total(name: str) -> np.ndarray:
        return np.where(resident, pods[name], 0.0).sum(axis=0)

    container_cpu = total("_cpu_vcpu") / cpu_capacity * 100.0
    cpu = rm.node_system_cpu + container_cpu + rm.node_cpu_jitter * n_cpu
    cpu = cpu + np.where(mem_stress > 0, rm.memory_stress_cpu, 0.0) + io / 100.0 * rm.io_stress_cpu
    cpu = np.where(cpu_stress > 0, np.maximum(cpu, cpu_stress), cpu)
    cpu = np.clip(cpu, 0.0, 100.0)

    pod_wait = (np.where(resident, pods["io_wait"], 0.0) * pods["_cpu_limit"]).sum(axis=0)
    iowait = np.clip(rm.base_io_wait + pod_wait / cpu_capacity + io / 100.0 * rm.io_stress_wait, 0.0, 100.0)

    runnable = (cpu + iowait) / 100.0 * cpu_capacity
    load_avg, load_state = _ema(runnable, _alpha(tick_seconds, rm.load_average_time_constant), load_state)

    pods_mem_mb = total("_mem_mb")
    used = (rm.node_system_mem_mb + pods_mem_mb + rm.node_mem_jitter_mb * n_mem) * MIB
    mem_util = np.clip(used / mem_capacity * 100.0, 0.0, 100.0)
    mem_util = np.where(mem_stress > 0, np.maximum(mem_util, mem_stress), mem_util)
    used = mem_util / 100.0 * mem_capacity
    cached = np.full(L, rm.node_cached_mem_mb * MIB)

    overhead_bytes = rm.node_net_overhead_bps * tick_seconds
    overhead_pkts = math.ceil(overhead_bytes / rm.packet_bytes)
    overhead_drop = np.rint(overhead_pkts * drop)

    disk_read = total("fs_read_bytes") + (rm.node_disk_read_bps + io / 100.0 * rm.io_stress_bps) * tick_seconds
    disk_write = total("fs_write_bytes") + (rm.node_disk_write_bps + io / 100.0 * rm.io_stress_bps) * tick_seconds
    read_ops = disk_read / rm.disk_op_bytes
    write_ops = disk_write / rm.disk_op_bytes
    elapsed_days = (t0 + np.arange(L)) * tick_seconds / 86400.0

    out = {
        "cpu_utilization": cpu,
        "cpu_user": 0.75 * cpu,
        "cpu_system": 0.25 * cpu,
        "cpu_iowait": iowait,
        "load_average_1m": load_avg,
        "mem_utilization": mem_util,
        "mem_used_bytes": used,
        "mem_cached_bytes": cached,
        "mem_available_bytes": np.maximum(mem_capacity - used - cached, 0.0),
        "net_rx_bytes": total("net_rx_bytes") + overhead_bytes,
        "net_tx_bytes": total("net_tx_bytes") + overhead_bytes,
        "net_rx_packets": total("net_rx_packets") + overhead_pkts - overhead_drop,
        "net_tx_packets": total("net_tx_packets") + overhead_pkts - overhead_drop,
        "net_rx_dropped": total("net_rx_dropped") + overhead_drop,
        "net_tx_dropped": total("net_tx_dropped") + overhead_drop,
        "disk_read_bytes": disk_read,
        "disk_write_bytes": disk_write,
        "disk_read_ops": read_ops,
        "disk_write_ops": write_ops,
        "disk_io_time_ms": np.minimum((read_ops + write_ops) * rm.disk_op_ms + io / 100.0 * 800.0 * tick_seconds,
                                      1000.0 * tick_seconds),
        "filesystem_utilization": np.clip(
            rm.filesystem_base + rm.filesystem_growth_per_day * elapsed_days + io / 100.0 * 5.0, 0.0, 100.0
        ),
        "running_pods": resident.sum(axis=0).astype(float),
        "container_cpu_utilization": np.clip(container_cpu, 0.0, 100.0),
        "container_mem_utilization": np.clip(pods_mem_mb * MIB / mem_capacity * 100.0, 0.0, 100.0),
        "context_switches": rm.context_switch_base * tick_seconds
        + rm.context_switch_per_request * total("request_count"),
    }
    return out, load_state


def service_response(
    member: np.ndarray,
    pods: Mapping[str, np.ndarray],
    up: np.ndarray,
    offered_rate: np.ndarray,
    rng: np.random.Generator,
    *,
    tick_seconds: int = 1,
) -> dict[str, np.ndarray]:
    """Service tick arrays from its member pods (``member`` indexes pod rows).

    Requests that arrive while no pod is running fail with a 5xx.
    """
    m_up = up[member]
    n_up = m_up.sum(axis=0)
    unserved = rng.poisson(np.where(n_up == 0, offered_rate * tick_seconds, 0.0)).astype(float)

    def total(name: str) -> np.ndarray:
        return np.where(m_up, pods[name][member], 0.0).sum(axis=0)

    weights = np.where(m_up, pods["_rate"][member], 0.0)
    lat = pods["_latency"][member]
    wsum = weights.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        weighted = (weights * lat).sum(axis=0) / wsum
        plain = np.where(m_up, lat, 0.0).sum(axis=0) / n_up
    avg = np.where(wsum > 0, weighted, np.where(n_up > 0, plain, np.nan))
    p95 = np.where(m_up, pods["p95_latency_ms"][member], -np.inf).max(axis=0)
    p95 = np.where(n_up > 0, p95, np.nan)

    return {
        "request_rate": (total("request_count") + unserved) / tick_seconds,
        "failed_requests": total("failed_requests") + unserved,
        "avg_latency_ms": avg,
        "p95_latency_ms": p95,
        "rx_bytes": total("net_rx_bytes"),
        "tx_bytes": total("net_tx_bytes"),
        "requests_4xx": total("_cli_err"),
        "requests_5xx": total("_srv_err") + unserved,
        "active_pods": n_up.astype(float),
    }


class MetricsEngine:
    """Evaluate every node, pod and service metric tick by tick.

    Work happens in blocks of ``block_ticks`` on a fixed grid, so output for a
    seed does not depend on how the caller walks time. Blocks must be produced
    in order because memory and load-average filters carry across them.
    """

    def __init__(
        self,
        topology: ClusterTopology,
        users,
        experiments: Sequence[Experiment] = (),
        *,
        mix: ScenarioMix | None = None,
        scenarios=DEFAULT_SCENARIOS,
        response: ResponseModel | None = None,
        seed: int = 0,
        tick_seconds: int = 1,
        horizon: int | None = None,
        block_ticks: int = 7200,
    ):
        self.topology = topology
        self.users = np.asarray(users, dtype=float)
        self.horizon = len(self.users) if horizon is None else int(horizon)
        if self.horizon > len(self.users):
            raise ValueError("horizon exceeds the user series")
        if not np.all(np.isfinite(self.users) & (self.users >= 0)):
            raise ValueError("user counts must be finite and non-negative")
        self.experiments = list(experiments)
        self.mix = mix or ScenarioMix()
        self.response = response or ResponseModel()
        self.seed = int(seed)
        self.tick_seconds = tick_seconds
        self.block_ticks = int(block_ticks)

        self.services = topology.services
        coeffs = request_coefficients(self.mix, scenarios)
        self.svc_coeff = np.array([coeffs.get(s, 0.0) for s in self.services])
        svc_idx = {s: i for i, s in enumerate(self.services)}
        self.pod_svc = np.array([svc_idx[p.service_id] for p in topology.pods])
        self.members = [np.flatnonzero(self.pod_svc == i) for i in range(len(self.services))]
        self.profiles = [self.response.profile(p.service_id) for p in topology.pods]
        self.cpu_limits = np.array([p.cpu_limit for p in topology.pods])

        self.columns = metric_columns(topology)
        self.aggregations = metric_aggregations(topology)

        self.timeline = ClusterTimeline.build(
            topology, self.experiments, self.horizon, self.response, tick_seconds, self._expected_node_cpu
        )
        self._reset()

    def _reset(self) -> None:
        self._next_block = 0
        self._mem_state: list[float | None] = [None] * len(self.topology.pods)
        self._load_state: list[float | None] = [None] * len(self.topology.nodes)
        self._cached: tuple[int, np.ndarray] | None = None

    @property
    def n_blocks(self) -> int:
        return -(-self.horizon // self.block_ticks)

    def _expected_node_cpu(self, t: int, live: ClusterTopology, pod_up: np.ndarray) -> dict[str, float]:
        """Jitter-free node CPU at tick ``t``, used to pick reschedule targets."""
        rm = self.response
        svc_rate = self.svc_coeff * self.users[t]
        n_up = np.bincount(self.pod_svc[pod_up], minlength=len(self.services))
        cpu = {n.node_id: rm.node_system_cpu for n in live.nodes}
        for i, pod in enumerate(live.pods):
            if not pod_up[i]:
                continue
            s = self.pod_svc[i]
            share = svc_rate[s] / max(n_up[s], 1)
            prof = self.profiles[i]
            pod_cpu = min(100.0, prof.base_cpu + prof.cpu_per_rps * share)
            cpu[pod.node_id] += pod_cpu / 100.0 * pod.cpu_limit / live.node(pod.node_id).cpu_capacity * 100.0
        for exp in self.experiments:
            if exp.kind is FaultKind.CPU_STRESS and exp.target_type == "node" and exp.active(t):
                for nid in exp.entity_ids:
                    cpu[nid] = max(cpu[nid], exp.parameters["load_percent"])
        return cpu

    def _fault_levels(self, c0: int, c1: int):
        L = c1 - c0
        P, N = len(self.topology.pods), len(self.topology.nodes)
        pod = {k: np.zeros((P, L)) for k in FAULT_LEVEL_PARAM}
        node = {k: np.zeros((N, L)) for k in FAULT_LEVEL_PARAM}
        tl = self.timeline
        for exp in self.experiments:
            if exp.kind in INSTANTANEOUS or exp.end_tick < c0 or exp.start_tick >= c1:
                continue
            value = float(exp.parameters[FAULT_LEVEL_PARAM[exp.kind]])
            if exp.kind is FaultKind.PACKET_DROP:
                value /= 100.0
            lo = max(exp.start_tick, c0) - c0
            hi = min(exp.end_tick, c1 - 1) - c0 + 1
            if exp.target_type == "pod":
                arr, index = pod[exp.kind], tl.pod_index
            else:
                arr, index = node[exp.kind], tl.node_index
            for ent in exp.entity_ids:
                row = arr[index[ent]]
                np.maximum(row[lo:hi], value, out=row[lo:hi])
        return pod, node

    def block(self, k: int) -> np.ndarray:
        """Tick-level values for block ``k`` as a (ticks, columns) array.

        Absent values (entity down) are NaN.
        """
        if self._cached is not None and self._cached[0] == k:
            return self._cached[1]
        if k < self._next_block:
            self._reset()
        while self._next_block <= k:
            out = self._compute_block(self._next_block)
            self._cached = (self._next_block, out)
            self._next_block += 1
        return self._cached[1]

    def iter_blocks(self) -> Iterator[tuple[int, np.ndarray]]:
        """Yield ``(first_tick, block)`` over the whole horizon."""
        for k in range(self.n_blocks):
            yield k * self.block_ticks, self.block(k)

    def _compute_block(self, k: int) -> np.ndarray:
        rm, ts, tl = self.response, self.tick_seconds, self.timeline
        c0 = k * self.block_ticks
        c1 = min(c0 + self.block_ticks, self.horizon)
        L = c1 - c0
        topo = self.topology
        P, S = len(topo.pods), len(self.services)

        up = tl.pod_up[:, c0:c1]
        place = tl.placement[:, c0:c1].astype(np.intp)
        svc_rate = self.svc_coeff[:, None] * self.users[None, c0:c1]
        n_up = np.stack([up[m].sum(axis=0) for m in self.members]).astype(float)
        pod_faults, node_faults = self._fault_levels(c0, c1)
        cols = np.arange(L)

        pods: dict[str, np.ndarray] = {}
        for i, pod in enumerate(topo.pods):
            s = self.pod_svc[i]
            offered = np.where(up[i], svc_rate[s] / np.maximum(n_up[s], 1), 0.0)
            faults = {}
            for kind in FAULT_LEVEL_PARAM:
                level = pod_faults[kind][i]
                if kind in PROPAGATES_TO_PODS:
                    level = np.maximum(level, node_faults[kind][place[i], cols])
                faults[kind] = level
            res, self._mem_state[i] = pod_response(
                self.profiles[i], pod.cpu_limit, pod.mem_limit, offered, up[i], faults,
                substream(self.seed, 1, i, k), rm,
                think_time=self.mix.think_time, tick_seconds=ts, mem_state=self._mem_state[i],
            )
            res["restart_count"] = tl.restart_counts(i, c0, c1)
            res["ready"] = up[i].astype(float)
            for name, arr in res.items():
                if name not in pods:
                    pods[name] = np.empty((P, L))
                pods[name][i] = arr
        pods["_cpu_limit"] = np.repeat(self.cpu_limits[:, None], L, axis=1)

        # filled column-major, returned as (ticks, columns)
        out = np.empty((len(self.columns), L))
        col = 0
        for j, node in enumerate(topo.nodes):
            resident = (place == j) & up
            nf = {kind: node_faults[kind][j] for kind in FAULT_LEVEL_PARAM}
            res, self._load_state[j] = node_load_response(
                node.cpu_capacity, node.mem_capacity, resident, pods, nf,
                substream(self.seed, 2, j, k), rm, tick_seconds=ts, t0=c0, load_state=self._load_state[j],
            )
            down = ~tl.node_up[j, c0:c1]
            for m in NODE_METRICS:
                out[col] = np.where(down, np.nan, res[m.name])
                col += 1
        for i in range(P):
            for m in POD_METRICS:
                v = pods[m.name][i]
                out[col] = v if m.name in POD_ALWAYS_REPORTED else np.where(up[i], v, np.nan)
                col += 1
        for s in range(S):
            res = service_response(
                self.members[s], pods, up, svc_rate[s], substream(self.seed, 3, s, k), tick_seconds=ts
            )
            for m in SERVICE_METRICS:
                out[col] = res[m.name]
                col += 1
        return out.T

    def simulate_tick(self, t: int) -> list[MetricSample]:
        """Every metric sample at tick ``t``; absent values are skipped."""
        if not 0 <= t < self.horizon:
            raise IndexError(f"tick {t} outside [0, {self.horizon})")
        k, offset = divmod(t, self.block_ticks)
        row = self.block(k)[offset]
        samples = []
        for name, value in zip(self.columns, row):
            if np.isnan(value):
                continue
            _, entity, metric = name.split(".", 2)
            samples.append(MetricSample(t, entity, metric, float(value)))
        return samples

    def series(self, column: str) -> np.ndarray:
        """Tick-level values of one column over the horizon (walks all blocks)."""
        j = self.columns.index(column)
        return np.concatenate([b[:, j] for _, b in self.iter_blocks()])

    def frame(self) -> np.ndarray:
        """Full tick-level matrix. Only for short horizons."""
        return np.concatenate([b for _, b in self.iter_blocks()])
