"""Deterministic simulator of geo-distributed microservice chains.

Compares an exact centralized chain scheduler against a decentralized
per-hop sidecar policy under shared execution, contention, network, energy,
and metadata-staleness models.
"""
from .bench import RunSummary, bench_complexity, run_scenario, summarize, sweep_rates
from .config import (
    MetadataConfig,
    RunConfig,
    ScenarioConfig,
    SchedulerConfig,
    WorkloadConfig,
    desk_scenario,
)
from .engine import (
    CENTRALIZED,
    COMPLETED,
    DECENTRALIZED,
    DROPPED,
    EngineOptions,
    ExecutionRecord,
    HopRecord,
    HostCpuState,
    SimulationResult,
    advance_cpu,
    host_energy_joules,
    run,
    utilization_bound,
)
from .errors import ConfigError, DomainError, EngineError, IoError, PlacementError, SimError
from .metadata import HostMetrics, MetadataSnapshot, MetadataStore, idle_metrics
from .platform import (
    HostSpec,
    LinkSpec,
    Platform,
    PlatformConfig,
    RegionSpec,
    build_platform,
    exec_carbon,
    power_draw,
    transfer_time,
)
from .schedulers import (
    ExecutionPath,
    HopDecision,
    PlacementCost,
    centralized_solve,
    estimate_hop_latency,
    latency_central,
    latency_decentral,
    sidecar_next_hop,
)
from .workload import (
    ReplicaInstance,
    Request,
    ServiceChain,
    ServiceStage,
    generate_arrivals,
    place_replicas,
)

__version__ = "0.1.0"

__all__ = [
    "CENTRALIZED",
    "COMPLETED",
    "DECENTRALIZED",
    "DROPPED",
    "ConfigError",
    "DomainError",
    "EngineError",
    "EngineOptions",
    "ExecutionPath",
    "ExecutionRecord",
    "HopDecision",
    "HopRecord",
    "HostCpuState",
    "HostMetrics",
    "HostSpec",
    "IoError",
    "LinkSpec",
    "MetadataConfig",
    "MetadataSnapshot",
    "MetadataStore",
    "PlacementCost",
    "PlacementError",
    "Platform",
    "PlatformConfig",
    "RegionSpec",
    "ReplicaInstance",
    "Request",
    "RunConfig",
    "RunSummary",
    "ScenarioConfig",
    "SchedulerConfig",
    "ServiceChain",
    "ServiceStage",
    "SimError",
    "SimulationResult",
    "WorkloadConfig",
    "advance_cpu",
    "bench_complexity",
    "build_platform",
    "centralized_solve",
    "desk_scenario",
    "estimate_hop_latency",
    "exec_carbon",
    "generate_arrivals",
    "host_energy_joules",
    "idle_metrics",
    "latency_central",
    "latency_decentral",
    "place_replicas",
    "power_draw",
    "run",
    "run_scenario",
    "sidecar_next_hop",
    "summarize",
    "sweep_rates",
    "transfer_time",
    "utilization_bound",
    "__version__",
]
