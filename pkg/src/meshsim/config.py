"""Scenario configuration: typed sections, YAML loading, strict validation.

A scenario file is a YAML mapping with up to five sections — platform,
workload, scheduler, metadata, run — each holding the keys of the matching
dataclass below. Unknown sections or keys are rejected with the offending
name so typos fail before any simulation starts.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

import yaml

from .errors import ConfigError
from .platform import PlatformConfig

CENTRALIZED = "centralized"
DECENTRALIZED = "decentralized"


@dataclass
class WorkloadConfig:
    """Open-loop Poisson workload over one linear service chain."""

    services: int | list = 10  # a count (ids svc00..) or an explicit id list
    chain: list | None = None  # ordered service ids; None: all services in order
    work_flop: float = 1e9  # 0.1 s per stage at the default 10 GFLOP/s host
    payload_bytes: float = 1e6  # inter-stage message size
    request_payload_bytes: float = 1e6  # client -> first stage
    latency_budget_s: float = 3.0
    replicas_per_service: int = 5
    actors_per_replica: int = 24
    rate_rps: float = 1.0
    duration_s: float = 10.0
    origin_host: str | None = None  # None: first platform host
    seed: int | None = None  # None: the run seed

    def service_ids(self) -> list[str]:
        if isinstance(self.services, int):
            return [f"svc{i:02d}" for i in range(self.services)]
        return list(self.services)

    def chain_ids(self) -> list[str]:
        if self.chain is None:
            return self.service_ids()
        return list(self.chain)


@dataclass
class SchedulerConfig:
    kind: str = DECENTRALIZED
    w_lat: float = 1.0
    saturate_to_queue: bool = False
    sidecar_latency_s: float = 1e-4
    sched_overhead_s: float = 2e-3
    sched_rtt_s: float | None = None  # None: 2x one-way route latency
    scheduler_host: str | None = None  # None: last platform host


@dataclass
class MetadataConfig:
    metadata_interval_s: float = 1.0  # 0: publish on every state change
    intra_region_delay_s: float = 0.1
    inter_region_delay_s: float = 1.0


@dataclass
class RunConfig:
    seed: int = 0
    duration_s: float | None = None  # horizon floor; None: workload duration
    out_dir: str = "out"
    shadow_ground_truth: bool = False


_BOOL_FIELDS = {"saturate_to_queue", "shadow_ground_truth"}
_INT_FIELDS = {
    "replicas_per_service",
    "actors_per_replica",
    "seed",
    "hosts_total",
    "regions",
    "cores_per_host",
}
_STR_FIELDS = {"kind", "origin_host", "scheduler_host", "out_dir"}


def _string_list(section: str, key: str, value: object) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{section}.{key}: expected a list of service ids, got {value!r}")
    return list(value)


def _coerce(section: str, key: str, value: object) -> object:
    if value is None:
        return None
    if key in _BOOL_FIELDS:
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key}: expected true/false, got {value!r}")
        return value
    if key in _STR_FIELDS:
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key}: expected a string, got {value!r}")
        return value
    if key == "carbon_intensity":
        if not isinstance(value, dict):
            raise ConfigError(f"{section}.{key}: expected a mapping, got {value!r}")
        return {str(k): float(v) for k, v in value.items()}
    if key == "services":
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        return _string_list(section, key, value)
    if key == "chain":
        return _string_list(section, key, value)
    if key in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return value
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}") from None


def _section_from_dict(cls, section: str, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"unknown key(s) in section {section!r}: {', '.join(sorted(unknown))}"
        )
    kwargs = {k: _coerce(section, k, v) for k, v in data.items()}
    return cls(**kwargs)


@dataclass
class ScenarioConfig:
    platform: PlatformConfig = field(default_factory=PlatformConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    metadata: MetadataConfig = field(default_factory=MetadataConfig)
    run: RunConfig = field(default_factory=RunConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"scenario must be a mapping, got {type(data).__name__}")
        sections = {
            "platform": PlatformConfig,
            "workload": WorkloadConfig,
            "scheduler": SchedulerConfig,
            "metadata": MetadataConfig,
            "run": RunConfig,
        }
        unknown = set(data) - set(sections)
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
        kwargs = {}
        for name, section_cls in sections.items():
            raw = data.get(name, {})
            if raw is None:
                raw = {}
            if not isinstance(raw, dict):
                raise ConfigError(f"section {name!r} must be a mapping")
            kwargs[name] = _section_from_dict(section_cls, name, raw)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, path: str) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if data is None:
            data = {}
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        self.platform.validate()
        w = self.workload
        if isinstance(w.services, int):
            if w.services < 1:
                raise ConfigError("workload.services must be >= 1")
        else:
            ids = w.service_ids()
            if not ids:
                raise ConfigError("workload.services must name at least one service")
            if len(set(ids)) != len(ids):
                raise ConfigError("workload.services contains duplicate ids")
        known = set(w.service_ids())
        chain = w.chain_ids()
        if not chain:
            raise ConfigError("workload.chain must name at least one stage")
        missing = [sid for sid in chain if sid not in known]
        if missing:
            raise ConfigError(
                f"workload.chain references unknown service id(s): {', '.join(missing)}"
            )
        if w.work_flop <= 0:
            raise ConfigError("workload.work_flop must be > 0")
        if w.payload_bytes < 0 or w.request_payload_bytes < 0:
            raise ConfigError("workload payload sizes must be >= 0")
        if w.latency_budget_s <= 0:
            raise ConfigError("workload.latency_budget_s must be > 0")
        if w.replicas_per_service < 1:
            raise ConfigError("workload.replicas_per_service must be >= 1")
        if w.replicas_per_service > self.platform.hosts_total:
            raise ConfigError(
                "workload.replicas_per_service cannot exceed platform.hosts_total"
            )
        if w.actors_per_replica < 1:
            raise ConfigError("workload.actors_per_replica must be >= 1")
        if w.rate_rps <= 0:
            raise ConfigError("workload.rate_rps must be > 0")
        if w.duration_s <= 0:
            raise ConfigError("workload.duration_s must be > 0")
        if w.seed is not None and w.seed < 0:
            raise ConfigError("workload.seed must be >= 0 when set")
        s = self.scheduler
        if s.kind not in (CENTRALIZED, DECENTRALIZED):
            raise ConfigError(
                f"scheduler.kind must be {CENTRALIZED!r} or {DECENTRALIZED!r}, got {s.kind!r}"
            )
        if s.w_lat < 0:
            raise ConfigError("scheduler.w_lat must be >= 0")
        if s.sidecar_latency_s < 0 or s.sched_overhead_s < 0:
            raise ConfigError("scheduler delays must be >= 0")
        if s.sched_rtt_s is not None and s.sched_rtt_s < 0:
            raise ConfigError("scheduler.sched_rtt_s must be >= 0")
        m = self.metadata
        if m.metadata_interval_s < 0:
            raise ConfigError("metadata.metadata_interval_s must be >= 0")
        if m.intra_region_delay_s < 0 or m.inter_region_delay_s < 0:
            raise ConfigError("metadata propagation delays must be >= 0")
        r = self.run
        if r.seed < 0:
            raise ConfigError("run.seed must be >= 0")
        if r.duration_s is not None and r.duration_s <= 0:
            raise ConfigError("run.duration_s must be > 0 when set")


def desk_scenario() -> ScenarioConfig:
    """The desk-scale default: a 1/10 linear scale of the full platform.

    110 hosts in 10 regions, a 10-stage chain with 5 replicas per service,
    24-actor pools on 24-core hosts. Peak-load sweeps scale to 1500 req/s.
    """
    cfg = ScenarioConfig(
        platform=PlatformConfig(hosts_total=110, regions=10),
        workload=WorkloadConfig(),
        scheduler=SchedulerConfig(),
        metadata=MetadataConfig(),
        run=RunConfig(),
    )
    cfg.validate()
    return cfg
