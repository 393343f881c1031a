"""Simulated cluster topology: nodes, pods, services and pod placement."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

from ._rng import as_rng

GIB = 1024**3
MIB = 1024**2


@dataclass(frozen=True)
class Node:
    node_id: str
    cpu_capacity: float = 2.0  # vCPU
    mem_capacity: float = 8 * GIB  # bytes
    resource_name: str = ""

    def __post_init__(self) -> None:
        if self.cpu_capacity <= 0 or self.mem_capacity <= 0:
            raise ValueError(f"{self.node_id}: capacities must be positive")
        if not self.resource_name:
            object.__setattr__(self, "resource_name", f"arn:sim:ec2:local:instance/{self.node_id}")


@dataclass
class Pod:
    pod_id: str
    service_id: str
    node_id: str
    labels: dict[str, str] = field(default_factory=dict)
    restart_count: int = 0
    cpu_limit: float = 0.5  # vCPU
    mem_limit: float = 512 * MIB  # bytes


@dataclass(frozen=True)
class RescheduleEvent:
    tick: int
    pod_id: str
    old_node: str
    new_node: str
    restart_delay: int

    @property
    def down_until(self) -> int:
        """First tick at which the pod is running again."""
        return self.tick + self.restart_delay


@dataclass
class ClusterTopology:
    nodes: list[Node]
    pods: list[Pod]

    def __post_init__(self) -> None:
        node_ids = [n.node_id for n in self.nodes]
        pod_ids = [p.pod_id for p in self.pods]
        if len(set(node_ids)) != len(node_ids):
            raise ValueError("node ids must be unique")
        if len(set(pod_ids)) != len(pod_ids):
            raise ValueError("pod ids must be unique")
        known = set(node_ids)
        for p in self.pods:
            if p.node_id not in known:
                raise ValueError(f"pod {p.pod_id} placed on unknown node {p.node_id}")

    @property
    def services(self) -> list[str]:
        """Service ids in first-appearance order."""
        return list(dict.fromkeys(p.service_id for p in self.pods))

    def service_pods(self, service_id: str) -> list[Pod]:
        return [p for p in self.pods if p.service_id == service_id]

    def pod(self, pod_id: str) -> Pod:
        for p in self.pods:
            if p.pod_id == pod_id:
                return p
        raise KeyError(pod_id)

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def node_by_resource(self, resource_name: str) -> Node:
        for n in self.nodes:
            if n.resource_name == resource_name:
                return n
        raise KeyError(resource_name)

    def resident_pods(self, node_id: str) -> list[Pod]:
        return [p for p in self.pods if p.node_id == node_id]

    def to_dict(self) -> dict:
        return {
            "nodes": [asdict(n) for n in self.nodes],
            "pods": [
                {
                    "pod_id": p.pod_id,
                    "service_id": p.service_id,
                    "node_id": p.node_id,
                    "labels": dict(p.labels),
                    "cpu_limit": p.cpu_limit,
                    "mem_limit": p.mem_limit,
                }
                for p in self.pods
            ],
            "services": [
                {"service_id": s, "pods": [p.pod_id for p in self.service_pods(s)]}
                for s in self.services
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> ClusterTopology:
        nodes = [Node(**n) for n in data["nodes"]]
        pods = [
            Pod(
                pod_id=p["pod_id"],
                service_id=p["service_id"],
                node_id=p["node_id"],
                labels=dict(p.get("labels", {})),
                cpu_limit=p.get("cpu_limit", 0.5),
                mem_limit=p.get("mem_limit", 512 * MIB),
            )
            for p in data["pods"]
        ]
        return cls(nodes, pods)


# service -> replica count; 14 pods across 10 services
DEFAULT_SERVICES: dict[str, int] = {
    "frontend": 3,
    "catalogue": 2,
    "cart": 2,
    "orders": 1,
    "payment": 1,
    "shipping": 1,
    "user": 1,
    "login": 1,
    "catalogue-db": 1,
    "orders-db": 1,
}


def build_topology(
    n_nodes: int = 5,
    services: Mapping[str, int] = DEFAULT_SERVICES,
    *,
    node_cpu: float = 2.0,
    node_mem: float = 8 * GIB,
    pod_cpu_limit: float = 0.5,
    pod_mem_limit: float = 512 * MIB,
    db_mem_limit: float = 1 * GIB,
) -> ClusterTopology:
    """Nodes ``node-1..node-n`` with pods placed round-robin in service order."""
    if n_nodes < 1:
        raise ValueError("need at least one node")
    nodes = [Node(f"node-{i + 1}", node_cpu, node_mem) for i in range(n_nodes)]
    pods = []
    k = 0
    for service, replicas in services.items():
        if replicas < 1:
            raise ValueError(f"service {service} needs at least one replica")
        for r in range(replicas):
            pods.append(
                Pod(
                    pod_id=f"{service}-{r}",
                    service_id=service,
                    node_id=nodes[k % n_nodes].node_id,
                    labels={"app": service},
                    cpu_limit=pod_cpu_limit,
                    mem_limit=db_mem_limit if service.endswith("-db") else pod_mem_limit,
                )
            )
            k += 1
    return ClusterTopology(nodes, pods)


def build_default_topology() -> ClusterTopology:
    return build_topology()


def _resident_count(topology: ClusterTopology) -> dict[str, float]:
    counts = {n.node_id: 0.0 for n in topology.nodes}
    for p in topology.pods:
        counts[p.node_id] += 1
    return counts


def reschedule_pod(
    topology: ClusterTopology,
    pod_id: str,
    t: int,
    *,
    node_cpu: Mapping[str, float] | None = None,
    exclude: set[str] | frozenset[str] = frozenset(),
    restart_delay: int = 30,
) -> RescheduleEvent:
    """Move a pod to the least-CPU node other than its current one (in place).

    ``node_cpu`` gives each node's current utilization; without it the resident
    pod count stands in. Ties go to the first node in topology order. With no
    other eligible node the pod restarts where it is.
    """
    pod = topology.pod(pod_id)
    load = dict(node_cpu) if node_cpu is not None else _resident_count(topology)
    candidates = [
        n.node_id for n in topology.nodes if n.node_id != pod.node_id and n.node_id not in exclude
    ]
    old = pod.node_id
    if candidates:
        # min() keeps the first of equal keys, i.e. topology order
        pod.node_id = min(candidates, key=lambda nid: load.get(nid, 0.0))
    pod.restart_count += 1
    return RescheduleEvent(t, pod_id, old, pod.node_id, restart_delay)


def select_pods(topology: ClusterTopology, selector: Mapping[str, str] | None = None) -> list[Pod]:
    """Pods whose labels contain every key/value of ``selector``."""
    selector = selector or {}
    return [p for p in topology.pods if all(p.labels.get(k) == v for k, v in selector.items())]


def select_random_target(
    topology: ClusterTopology,
    target_type: str,
    count: int = 1,
    rng=None,
    *,
    selector: Mapping[str, str] | None = None,
    exclude: set[str] | frozenset[str] = frozenset(),
) -> list[str]:
    """Uniform sample without replacement.

    Node targets come back as resource names, pod targets as pod ids matched
    by ``selector``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if target_type == "node":
        pool = [n.resource_name for n in topology.nodes if n.node_id not in exclude]
    elif target_type == "pod":
        pool = [p.pod_id for p in select_pods(topology, selector) if p.pod_id not in exclude]
    else:
        raise ValueError(f"unknown target type {target_type!r}")
    if count > len(pool):
        raise ValueError(f"asked for {count} {target_type} targets, only {len(pool)} available")
    rng = as_rng(rng)
    idx = rng.choice(len(pool), size=count, replace=False)
    return [pool[i] for i in idx]
