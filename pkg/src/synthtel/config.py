"""Run configuration, loaded from a TOML file.

Every key is optional; missing keys take the defaults below, which reproduce
the reference week-long dataset parameters. See ``config/default.toml``.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .cluster import DEFAULT_SERVICES, GIB, MIB, ClusterTopology, build_topology
from .faults import ExperimentTemplate, default_template_catalog, with_template_overrides
from .load import LoadConfig, SeasonalComponent, TrendConfig
from .load_anomaly import LoadAnomalyConfig
from .metrics import ResponseModel, ServiceProfile
from .scenarios import DEFAULT_SCENARIOS, ScenarioKind, ScenarioMix, UserScenario


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


@dataclass(frozen=True)
class TopologySpec:
    nodes: int = 5
    node_cpu: float = 2.0
    node_mem_gib: float = 8.0
    pod_cpu_limit: float = 0.5
    pod_mem_mib: float = 512.0
    db_mem_mib: float = 1024.0
    services: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_SERVICES))

    def build(self) -> ClusterTopology:
        return build_topology(
            self.nodes,
            self.services,
            node_cpu=self.node_cpu,
            node_mem=self.node_mem_gib * GIB,
            pod_cpu_limit=self.pod_cpu_limit,
            pod_mem_limit=self.pod_mem_mib * MIB,
            db_mem_limit=self.db_mem_mib * MIB,
        )


@dataclass(frozen=True)
class FaultConfig:
    p_anomaly: float = 0.01  # per minute
    targets_per_experiment: int = 1
    templates: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.p_anomaly <= 1:
            raise ValueError("p_anomaly must be in [0, 1]")
        if self.targets_per_experiment < 1:
            raise ValueError("targets_per_experiment must be >= 1")
        self.catalog()  # surfaces bad template overrides at load time

    def catalog(self) -> list[ExperimentTemplate]:
        return with_template_overrides(default_template_catalog(), self.templates)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    duration: int = 604800  # seconds
    tick_seconds: int = 1
    sampling_interval: int = 60  # seconds
    output_dir: str = "out"
    load: LoadConfig = field(default_factory=LoadConfig)
    load_anomaly: LoadAnomalyConfig = field(default_factory=LoadAnomalyConfig)
    mix: ScenarioMix = field(default_factory=ScenarioMix)
    scenarios: tuple[UserScenario, ...] = DEFAULT_SCENARIOS
    topology: TopologySpec = field(default_factory=TopologySpec)
    faults: FaultConfig = field(default_factory=FaultConfig)
    response: ResponseModel = field(default_factory=ResponseModel)

    def __post_init__(self) -> None:
        if self.tick_seconds < 1 or 60 % self.tick_seconds:
            raise ConfigError("tick_seconds must be a positive divisor of 60")
        if self.duration % self.tick_seconds:
            raise ConfigError("duration must be a multiple of tick_seconds")
        if self.sampling_interval < 1 or self.sampling_interval % self.tick_seconds:
            raise ConfigError("sampling_interval must be a positive multiple of tick_seconds")
        if self.duration < self.sampling_interval:
            raise ConfigError("duration is shorter than one sampling interval")
        if self.load.duration != self.n_ticks or self.load.tick_seconds != self.tick_seconds:
            raise ConfigError("load.duration/tick_seconds disagree with the run duration")

    @property
    def n_ticks(self) -> int:
        return self.duration // self.tick_seconds

    @property
    def window_ticks(self) -> int:
        return self.sampling_interval // self.tick_seconds

    @property
    def n_rows(self) -> int:
        return self.duration // self.sampling_interval

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        duration: int | None = None,
        sampling_interval: int | None = None,
        output_dir: str | None = None,
    ) -> RunConfig:
        """Copy with CLI-style overrides; the load duration follows ``duration``."""
        try:
            changes: dict[str, Any] = {}
            if seed is not None:
                changes["seed"] = seed
            if output_dir is not None:
                changes["output_dir"] = output_dir
            if sampling_interval is not None:
                changes["sampling_interval"] = sampling_interval
            if duration is not None:
                changes["duration"] = duration
                changes["load"] = dataclasses.replace(self.load, duration=duration // self.tick_seconds)
            return dataclasses.replace(self, **changes)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _pair(value, name: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{name} must be a two-element array")
    return tuple(value)


def _pick(table: Mapping, cls, name: str, **converted) -> Any:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    kwargs = {k: v for k, v in table.items() if k not in converted}
    kwargs.update({k: v for k, v in converted.items() if v is not None})
    return cls(**kwargs)


def _scenarios(table: Mapping) -> tuple[UserScenario, ...]:
    steps = table.get("steps")
    if not steps:
        return DEFAULT_SCENARIOS
    out = []
    for kind in ScenarioKind:
        if kind.value in steps:
            out.append(UserScenario(kind, tuple((str(s), int(n)) for s, n in steps[kind.value])))
        else:
            out.extend(sc for sc in DEFAULT_SCENARIOS if sc.kind is kind)
    return tuple(out)


def config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    try:
        return _config_from_dict(data)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    data = dict(data)
    top_keys = {"seed", "duration", "tick_seconds", "sampling_interval", "output_dir",
                "load", "load_anomaly", "scenarios", "topology", "faults", "response_model"}
    unknown = set(data) - top_keys
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")

    tick = int(data.get("tick_seconds", 1))
    duration = int(data.get("duration", 604800))

    load_t = dict(data.get("load", {}))
    trend_t = dict(load_t.pop("trend", {}))
    trend = _pick(
        trend_t, TrendConfig, "load.trend",
        slope_range=_pair(trend_t["slope_range"], "slope_range") if "slope_range" in trend_t else None,
    )
    components = None
    if "components" in load_t:
        components = tuple(
            SeasonalComponent(*_pair_or_triple(c)) for c in load_t["components"]
        )
    if tick > 0 and duration % tick == 0:
        load_t.setdefault("duration", duration // tick)
    load_t.setdefault("tick_seconds", tick)
    load = _pick(load_t, LoadConfig, "load", components=components, trend=trend)

    la_t = dict(data.get("load_anomaly", {}))
    load_anomaly = _pick(
        la_t, LoadAnomalyConfig, "load_anomaly",
        duration_range=_pair(la_t["duration_range"], "duration_range") if "duration_range" in la_t else None,
        multiplier_range=_pair(la_t["multiplier_range"], "multiplier_range") if "multiplier_range" in la_t else None,
    )

    sc_t = dict(data.get("scenarios", {}))
    scenarios = _scenarios(sc_t)
    sc_t.pop("steps", None)
    mix = _pick(sc_t, ScenarioMix, "scenarios")

    topo_t = dict(data.get("topology", {}))
    topology = _pick(topo_t, TopologySpec, "topology")

    f_t = dict(data.get("faults", {}))
    faults = _pick(f_t, FaultConfig, "faults")

    rm_t = dict(data.get("response_model", {}))
    profiles_t = rm_t.pop("services", {})
    rm = _pick(rm_t, ResponseModel, "response_model")
    if profiles_t:
        profiles = dict(rm.profiles)
        for svc, overrides in profiles_t.items():
            base = profiles.get(svc, ServiceProfile())
            profiles[svc] = _pick({**dataclasses.asdict(base), **overrides}, ServiceProfile,
                                  f"response_model.services.{svc}")
        rm = dataclasses.replace(rm, profiles=profiles)

    return RunConfig(
        seed=int(data.get("seed", 0)),
        duration=duration,
        tick_seconds=tick,
        sampling_interval=int(data.get("sampling_interval", 60)),
        output_dir=str(data.get("output_dir", "out")),
        load=load,
        load_anomaly=load_anomaly,
        mix=mix,
        scenarios=scenarios,
        topology=topology,
        faults=faults,
        response=rm,
    )


def _pair_or_triple(c) -> tuple:
    if not isinstance(c, (list, tuple)) or len(c) not in (2, 3):
        raise ConfigError("each load component is [period, amplitude] or [period, amplitude, noise_variance]")
    return tuple(c)


def load_config(path: str | Path) -> RunConfig:
    """Read a TOML config file. Raises ConfigError for bad content, OSError
    when the file cannot be read."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)
