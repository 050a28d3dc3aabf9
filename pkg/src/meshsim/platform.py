"""Simulated infrastructure: regions, hosts, links, power and carbon.

The network is a star per region (each host hangs off its region switch via
one edge link) joined by a single backbone. A route is therefore at most
edge -> backbone -> edge; transfers see the sum of link latencies plus the
payload pushed through the route's bottleneck bandwidth, with no cross-flow
contention. Power is linear in utilization between idle and max draw, and
carbon accounting charges only the dynamic (above-idle) energy of busy
cores, scaled by the region's carbon intensity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, DomainError

EDGE = "edge"
BACKBONE = "backbone"


@dataclass(frozen=True)
class LinkSpec:
    """One directed-use link: bandwidth in bytes/s, latency in seconds."""

    bandwidth: float
    latency: float
    kind: str = EDGE

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise DomainError(f"link bandwidth must be > 0, got {self.bandwidth}")
        if self.latency < 0:
            raise DomainError(f"link latency must be >= 0, got {self.latency}")
        if self.kind not in (EDGE, BACKBONE):
            raise DomainError(f"unknown link kind {self.kind!r}")


@dataclass(frozen=True)
class HostSpec:
    """A homogeneous multi-core machine; speed is flop/s per core."""

    id: str
    region_id: str
    cores: int
    speed: float
    power_off: float
    power_idle: float
    power_max: float

    def __post_init__(self):
        if self.cores < 1:
            raise DomainError(f"host {self.id}: cores must be >= 1")
        if self.speed <= 0:
            raise DomainError(f"host {self.id}: speed must be > 0")
        if not (self.power_off <= self.power_idle <= self.power_max):
            raise DomainError(
                f"host {self.id}: power levels must satisfy off <= idle <= max"
            )


@dataclass(frozen=True)
class RegionSpec:
    """A named group of hosts sharing one carbon intensity (g CO2 per joule)."""

    id: str
    host_ids: tuple[str, ...]
    carbon_intensity: float

    def __post_init__(self):
        if not self.host_ids:
            raise DomainError(f"region {self.id} has no hosts")
        if self.carbon_intensity < 0:
            raise DomainError(f"region {self.id}: carbon intensity must be >= 0")


@dataclass
class PlatformConfig:
    """Platform section of a scenario file; defaults are the full-scale testbed."""

    hosts_total: int = 1100
    regions: int = 10
    cores_per_host: int = 24
    cpu_gflops: float = 10.0
    link_bw_Bps: float = 125e6
    link_lat_s: float = 50e-6
    backbone_bw_Bps: float = 2.25e9
    backbone_lat_s: float = 500e-6
    power_off_W: float = 10.0
    power_idle_W: float = 20.0
    power_max_W: float = 200.0
    # region id -> g CO2 per joule; None synthesizes a spread so regions differ
    carbon_intensity: dict[str, float] | None = None

    def region_ids(self) -> list[str]:
        return [f"region{i:02d}" for i in range(self.regions)]

    def region_quotas(self) -> list[int]:
        base, rem = divmod(self.hosts_total, self.regions)
        return [base + (1 if i < rem else 0) for i in range(self.regions)]

    def validate(self) -> None:
        if self.hosts_total <= 0:
            raise ConfigError("hosts_total must be > 0")
        if self.regions <= 0:
            raise ConfigError("regions must be > 0")
        if self.hosts_total < self.regions:
            raise ConfigError(
                f"hosts_total={self.hosts_total} cannot fill {self.regions} regions"
            )
        if self.cores_per_host < 1:
            raise ConfigError("cores_per_host must be >= 1")
        for key in ("cpu_gflops", "link_bw_Bps", "backbone_bw_Bps"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be > 0")
        for key in ("link_lat_s", "backbone_lat_s"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0")
        if not (self.power_off_W <= self.power_idle_W <= self.power_max_W):
            raise ConfigError("power levels must satisfy off <= idle <= max")
        if self.carbon_intensity is not None:
            known = set(self.region_ids())
            unknown = set(self.carbon_intensity) - known
            if unknown:
                raise ConfigError(f"carbon_intensity for unknown regions: {sorted(unknown)}")
            missing = known - set(self.carbon_intensity)
            if missing:
                raise ConfigError(f"carbon_intensity missing regions: {sorted(missing)}")
            if any(v < 0 for v in self.carbon_intensity.values()):
                raise ConfigError("carbon_intensity values must be >= 0")


class Platform:
    """The world the engine runs against: regions, hosts, and routes.

    Construct directly for heterogeneous test platforms, or via
    build_platform() for the homogeneous star-per-region layout.
    """

    def __init__(
        self,
        regions: list[RegionSpec],
        hosts: list[HostSpec],
        edge_links: dict[str, LinkSpec],
        backbone: LinkSpec,
    ):
        if not hosts:
            raise ConfigError("platform needs at least one host")
        if not regions:
            raise ConfigError("platform needs at least one region")
        self.regions = list(regions)
        self.hosts = list(hosts)
        self.edge_links = dict(edge_links)
        self.backbone = backbone
        self._host_by_id = {h.id: h for h in hosts}
        if len(self._host_by_id) != len(hosts):
            raise ConfigError("duplicate host ids")
        self._region_by_id = {r.id: r for r in regions}
        if len(self._region_by_id) != len(regions):
            raise ConfigError("duplicate region ids")
        self._region_of: dict[str, RegionSpec] = {}
        for r in regions:
            for hid in r.host_ids:
                if hid not in self._host_by_id:
                    raise ConfigError(f"region {r.id} lists unknown host {hid}")
                if hid in self._region_of:
                    raise ConfigError(f"host {hid} appears in two regions")
                self._region_of[hid] = r
        claimed = sum(len(r.host_ids) for r in regions)
        if claimed != len(hosts):
            raise ConfigError(
                f"region host quotas cover {claimed} hosts, platform has {len(hosts)}"
            )
        for h in hosts:
            if h.id not in self.edge_links:
                raise ConfigError(f"host {h.id} has no edge link")
            if self._region_of[h.id].id != h.region_id:
                raise ConfigError(f"host {h.id} region mismatch")

    def host(self, host_id: str) -> HostSpec:
        return self._host_by_id[host_id]

    def region(self, region_id: str) -> RegionSpec:
        return self._region_by_id[region_id]

    def region_of(self, host_id: str) -> RegionSpec:
        return self._region_of[host_id]

    def route(self, a: str, b: str) -> list[LinkSpec]:
        """Ordered links from host a to host b; empty for a == b."""
        if a not in self._host_by_id or b not in self._host_by_id:
            raise DomainError(f"unknown host in route({a!r}, {b!r})")
        if a == b:
            return []
        if self._region_of[a].id == self._region_of[b].id:
            return [self.edge_links[a], self.edge_links[b]]
        return [self.edge_links[a], self.backbone, self.edge_links[b]]

    # Dense route tables; the solver and engine touch these on hot paths.
    @cached_property
    def host_index(self) -> dict[str, int]:
        return {h.id: i for i, h in enumerate(self.hosts)}

    @cached_property
    def _route_tables(self) -> tuple[np.ndarray, np.ndarray]:
        edge_lat = np.array([self.edge_links[h.id].latency for h in self.hosts])
        edge_bw = np.array([self.edge_links[h.id].bandwidth for h in self.hosts])
        region_pos = {rid: i for i, rid in enumerate(self._region_by_id)}
        ridx = np.array([region_pos[h.region_id] for h in self.hosts])
        cross = ridx[:, None] != ridx[None, :]
        lat = edge_lat[:, None] + edge_lat[None, :] + self.backbone.latency * cross
        bw = np.minimum(edge_bw[:, None], edge_bw[None, :])
        bw = np.where(cross, np.minimum(bw, self.backbone.bandwidth), bw)
        np.fill_diagonal(lat, 0.0)
        np.fill_diagonal(bw, np.inf)
        return lat, bw

    @property
    def latency_table(self) -> np.ndarray:
        return self._route_tables[0]

    @property
    def bandwidth_table(self) -> np.ndarray:
        return self._route_tables[1]

    def route_latency(self, a: str, b: str) -> float:
        idx = self.host_index
        return float(self.latency_table[idx[a], idx[b]])

    def transfer_seconds(self, a: str, b: str, nbytes: float) -> float:
        """transfer_time() via the dense tables, identical to route()-based math."""
        if a == b:
            return 0.0
        idx = self.host_index
        i, j = idx[a], idx[b]
        return float(self.latency_table[i, j]) + nbytes / float(self.bandwidth_table[i, j])

    @cached_property
    def max_speed(self) -> float:
        return max(h.speed for h in self.hosts)


def build_platform(config: PlatformConfig) -> Platform:
    """Materialize the homogeneous star-per-region platform from its config."""
    config.validate()
    region_ids = config.region_ids()
    quotas = config.region_quotas()
    ci = config.carbon_intensity
    if ci is None:
        # synthetic spread so region choice matters for carbon
        ci = {rid: 5e-5 * (1 + i) for i, rid in enumerate(region_ids)}
    hosts: list[HostSpec] = []
    regions: list[RegionSpec] = []
    edge_links: dict[str, LinkSpec] = {}
    edge = LinkSpec(config.link_bw_Bps, config.link_lat_s, EDGE)
    backbone = LinkSpec(config.backbone_bw_Bps, config.backbone_lat_s, BACKBONE)
    serial = 0
    for rid, quota in zip(region_ids, quotas):
        ids = []
        for _ in range(quota):
            hid = f"h{serial:04d}"
            hosts.append(
                HostSpec(
                    id=hid,
                    region_id=rid,
                    cores=config.cores_per_host,
                    speed=config.cpu_gflops * 1e9,
                    power_off=config.power_off_W,
                    power_idle=config.power_idle_W,
                    power_max=config.power_max_W,
                )
            )
            edge_links[hid] = edge
            ids.append(hid)
            serial += 1
        regions.append(RegionSpec(id=rid, host_ids=tuple(ids), carbon_intensity=ci[rid]))
    return Platform(regions, hosts, edge_links, backbone)


def transfer_time(nbytes: float, route: list[LinkSpec]) -> float:
    """Seconds to move nbytes over a route: sum of latencies + bottleneck push."""
    if nbytes < 0:
        raise DomainError(f"nbytes must be >= 0, got {nbytes}")
    if not route:
        return 0.0
    latency = sum(l.latency for l in route)
    bottleneck = min(l.bandwidth for l in route)
    return latency + nbytes / bottleneck


def power_draw(host: HostSpec, utilization: float, on: bool = True) -> float:
    """Instantaneous watts at the given core utilization in [0, 1]."""
    if not on:
        return host.power_off
    if not 0.0 <= utilization <= 1.0:
        raise DomainError(f"utilization must be in [0, 1], got {utilization}")
    return host.power_idle + utilization * (host.power_max - host.power_idle)


def exec_carbon(host: HostSpec, region: RegionSpec, busy_core_seconds: float) -> float:
    """Grams of CO2 for the dynamic energy of busy_core_seconds on this host.

    Only the idle-to-max span counts: keeping a host powered is charged to
    the platform, not to the work that happens to run there.
    """
    if busy_core_seconds < 0:
        raise DomainError(f"busy_core_seconds must be >= 0, got {busy_core_seconds}")
    span_per_core = (host.power_max - host.power_idle) / host.cores
    return span_per_core * busy_core_seconds * region.carbon_intensity
