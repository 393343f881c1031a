"""Shared fixtures-by-function for the metric and acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from synthtel._rng import substream
from synthtel.cluster import build_default_topology
from synthtel.faults import FaultKind, default_template_catalog, make_experiment
from synthtel.load import LoadConfig, generate_load, generate_trend
from synthtel.metrics import MetricsEngine

HORIZON = 7200  # two hours of 1 s ticks
FAULT_START = 1800


def reference_load(seed: int, horizon: int = HORIZON):
    cfg = LoadConfig(duration=horizon)
    trend = generate_trend(cfg.trend, horizon, substream(seed, 101))
    return generate_load(cfg, trend, substream(seed, 102))


def template(kind: FaultKind, target_type: str = "pod"):
    return next(t for t in default_template_catalog() if t.kind is kind and t.target_type == target_type)


def experiment(topology, kind, target, start=FAULT_START, target_type="pod"):
    if target_type == "node":
        target = topology.node(target).resource_name
    return make_experiment("exp-00001", template(kind, target_type), topology, [target], start)


@dataclass
class Pair:
    """A faulted run and its fault-free twin with the same seed."""

    base: np.ndarray
    fault: np.ndarray
    engine: MetricsEngine

    def col(self, name: str) -> int:
        return self.engine.columns.index(name)

    def both(self, name: str, window: slice) -> tuple[np.ndarray, np.ndarray]:
        j = self.col(name)
        return self.base[window, j], self.fault[window, j]


def paired(seed: int, experiments=(), users=None, topology=None, horizon: int = HORIZON) -> Pair:
    topology = topology or build_default_topology()
    base_users = reference_load(seed, horizon).users
    base = MetricsEngine(topology, base_users, [], seed=seed).frame()
    engine = MetricsEngine(topology, base_users if users is None else users, list(experiments), seed=seed)
    return Pair(base, engine.frame(), engine)


def window(exp) -> slice:
    return slice(exp.start_tick, exp.end_tick + 1)


def signature_suite(seed: int) -> list[tuple[str, bool, str]]:
    """The six paired-run fault signatures; returns (name, ok, detail) rows."""
    topo = build_default_topology()
    out = []

    e = experiment(topo, FaultKind.CPU_STRESS, "frontend-0")
    p = paired(seed, [e])
    _, cpu = p.both("pod.frontend-0.cpu_utilization", window(e))
    rb, rf = p.both("pod.frontend-0.restart_count", window(e))
    ok = bool(np.nanmin(cpu) >= 95 and np.array_equal(rb, rf) and not any(
        r.pod_id == "frontend-0" for r in p.engine.timeline.restarts))
    out.append(("cpu_stress", ok, f"min pod CPU {np.nanmin(cpu):.1f}%, restarts {rf.max():.0f}"))

    e = experiment(topo, FaultKind.NETWORK_LATENCY, "frontend-0")
    p = paired(seed, [e])
    lb, lf = p.both("pod.frontend-0.p95_latency_ms", window(e))
    qb, qf = p.both("service.frontend.request_rate", window(e))
    lat = e.parameters["latency_ms"]
    # float rounding of (x + 400) - x only
    ok = bool(np.min(lf - lb) >= lat - 1e-9 and qf.mean() < qb.mean())
    out.append(("network_latency", ok,
                f"min p95 increase {np.min(lf - lb):.3f} ms, rate {qb.mean():.2f} -> {qf.mean():.2f} req/s"))

    e = experiment(topo, FaultKind.PACKET_DROP, "frontend-0")
    p = paired(seed, [e])
    _, failed = p.both("service.frontend.failed_requests", window(e))
    rb, rf = p.both("pod.frontend-0.restart_count", slice(e.end_tick, e.end_tick + 1))
    ok = bool(np.nansum(failed) > 0 and rf[0] - rb[0] >= 1)
    out.append(("packet_drop", ok, f"{np.nansum(failed):.0f} failed requests, restarts +{rf[0] - rb[0]:.0f}"))

    e = experiment(topo, FaultKind.MEMORY_STRESS, "cart-0")
    p = paired(seed, [e])
    _, mem = p.both("pod.cart-0.mem_utilization", window(e))
    cb, cf = p.both("pod.cart-0.cpu_utilization", window(e))
    ok = bool(np.nanmin(mem) >= e.parameters["load_percent"] and np.nanmean(cf) > np.nanmean(cb)
              and not p.engine.timeline.restarts)
    out.append(("memory_stress", ok, f"min memory {np.nanmin(mem):.1f}%, CPU {np.nanmean(cb):.1f} -> {np.nanmean(cf):.1f}%"))

    e = experiment(topo, FaultKind.POD_DELETE, "frontend-0")
    p = paired(seed, [e])
    ev = p.engine.timeline.restarts[0]
    after = slice(e.end_tick + 1, e.end_tick + 601)  # ten minutes once the pod is back
    sb, sf = p.both(f"node.{ev.old_node}.cpu_utilization", after)
    db, df = p.both(f"node.{ev.new_node}.cpu_utilization", after)
    ok = bool(ev.old_node != ev.new_node and np.nanmean(sf) < np.nanmean(sb) and np.nanmean(df) > np.nanmean(db))
    out.append(("pod_delete", ok, f"{ev.old_node} {np.nanmean(sb):.1f} -> {np.nanmean(sf):.1f}%, "
                                  f"{ev.new_node} {np.nanmean(db):.1f} -> {np.nanmean(df):.1f}%"))

    prof = reference_load(seed)
    w = slice(FAULT_START, FAULT_START + 600)
    users = prof.users.copy()
    users[w] = np.maximum(0, np.rint(prof.raw[w] * 1.5))
    p = paired(seed, users=users)
    cols = p.engine.columns
    cpu = [i for i, c in enumerate(cols) if c.startswith("node.") and c.endswith(".cpu_utilization")]
    net = [i for i, c in enumerate(cols) if c.startswith("node.") and c.endswith(("net_rx_bytes", "net_tx_bytes"))]
    mem = [i for i, c in enumerate(cols) if c.startswith("node.") and c.endswith(".mem_utilization")]
    cpu_b, cpu_f = p.base[w][:, cpu].sum(), p.fault[w][:, cpu].sum()
    net_b, net_f = p.base[w][:, net].sum(), p.fault[w][:, net].sum()
    mem_b, mem_f = p.base[w][:, mem].mean(), p.fault[w][:, mem].mean()
    rel = abs(mem_f - mem_b) / mem_b
    ok = bool(cpu_f > cpu_b and net_f > net_b and rel <= 0.02)
    out.append(("load_anomaly", ok, f"node CPU x{cpu_f / cpu_b:.2f}, net bytes x{net_f / net_b:.2f}, "
                                    f"memory {100 * rel:.2f}% off"))
    return out
