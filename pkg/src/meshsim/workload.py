"""Service chains, replica placement, and open-loop request arrivals."""
from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from .errors import DomainError, PlacementError
from .platform import Platform


@dataclass(frozen=True)
class ServiceStage:
    """One stage of a chain: the service it names, its compute, its output."""

    service_id: str
    work: float  # flop per request
    payload_out: float  # bytes forwarded to the next stage

    def __post_init__(self):
        if self.work <= 0:
            raise DomainError(f"stage {self.service_id}: work must be > 0")
        if self.payload_out < 0:
            raise DomainError(f"stage {self.service_id}: payload_out must be >= 0")


@dataclass(frozen=True)
class ServiceChain:
    """An ordered chain of stages with an end-to-end latency budget."""

    stages: tuple[ServiceStage, ...]
    latency_budget: float
    request_payload: float = 1e6  # bytes carried from the client into stage 1
    # suffix sums of work strictly after each stage, filled at construction so
    # per-hop feasibility floors cost O(1)
    _work_after: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if not self.stages:
            raise DomainError("chain must have at least one stage")
        if self.latency_budget <= 0:
            raise DomainError("latency_budget must be > 0")
        if self.request_payload < 0:
            raise DomainError("request_payload must be >= 0")
        suffix = [0.0] * len(self.stages)
        acc = 0.0
        for i in range(len(self.stages) - 1, -1, -1):
            suffix[i] = acc
            acc += self.stages[i].work
        object.__setattr__(self, "_work_after", tuple(suffix))

    def __len__(self) -> int:
        return len(self.stages)

    def work_after(self, stage_index: int) -> float:
        """Total flop in stages strictly after stage_index (0-based)."""
        return self._work_after[stage_index]


@dataclass
class ReplicaInstance:
    """A deployed copy of a service with its actor pool and FIFO wait queue."""

    replica_id: str
    service_id: str
    host_id: str
    actor_pool: int
    queue: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.actor_pool < 1:
            raise DomainError(f"replica {self.replica_id}: actor_pool must be >= 1")


@dataclass(frozen=True)
class Request:
    request_id: str
    chain: ServiceChain
    submit_time: float
    origin_host: str

    def __post_init__(self):
        if self.submit_time < 0:
            raise DomainError("submit_time must be >= 0")


def place_replicas(
    platform: Platform,
    service_id: str,
    count: int,
    seed: int | str,
    actor_pool: int = 24,
) -> list[ReplicaInstance]:
    """Spread count replicas round-robin over regions, seeded-uniform in each.

    Region k (in id order) receives replica indices k, k+R, k+2R, ... so any
    two regions differ by at most one replica. Within a region, hosts are
    drawn without replacement, so two replicas of the same service never
    share a host unless the service outgrows the region; overflow spills to
    regions that still have free hosts.
    """
    if count < 1:
        raise PlacementError(f"count must be >= 1, got {count}")
    if count > len(platform.hosts):
        raise PlacementError(
            f"cannot place {count} replicas of {service_id} on {len(platform.hosts)} hosts"
        )
    rng = random.Random(f"{seed}:place:{service_id}")
    regions = sorted(platform.regions, key=lambda r: r.id)
    nregions = len(regions)
    base, rem = divmod(count, nregions)
    quotas = [base + (1 if i < rem else 0) for i in range(nregions)]

    picked: list[list[str]] = []
    leftovers = 0
    for region, quota in zip(regions, quotas):
        hosts = sorted(region.host_ids)
        take = min(quota, len(hosts))
        picked.append(rng.sample(hosts, take))
        leftovers += quota - take
    if leftovers:
        # a region ran out of hosts: fall back to any host not yet used
        used = {h for chunk in picked for h in chunk}
        spare = sorted(h.id for h in platform.hosts if h.id not in used)
        extra = rng.sample(spare, leftovers)
        for i, h in enumerate(extra):
            picked[i % nregions].append(h)

    replicas = []
    cursors = [0] * nregions
    for k in range(count):
        region_idx = k % nregions
        while cursors[region_idx] >= len(picked[region_idx]):
            region_idx = (region_idx + 1) % nregions
        host = picked[region_idx][cursors[region_idx]]
        cursors[region_idx] += 1
        replicas.append(
            ReplicaInstance(
                replica_id=f"{service_id}-{k:04d}",
                service_id=service_id,
                host_id=host,
                actor_pool=actor_pool,
            )
        )
    return replicas


def generate_arrivals(
    rate_rps: float,
    duration: float,
    seed: int | str,
    chain: ServiceChain,
    origin_host: str,
    id_prefix: str = "req",
) -> list[Request]:
    """Poisson arrivals: exponential gaps at the given rate, cut at duration."""
    if rate_rps <= 0:
        raise DomainError(f"rate_rps must be > 0, got {rate_rps}")
    if duration <= 0:
        raise DomainError(f"duration must be > 0, got {duration}")
    rng = random.Random(f"{seed}:arrivals")
    requests = []
    t = rng.expovariate(rate_rps)
    i = 0
    while t < duration:
        requests.append(
            Request(
                request_id=f"{id_prefix}{i:07d}",
                chain=chain,
                submit_time=t,
                origin_host=origin_host,
            )
        )
        i += 1
        t += rng.expovariate(rate_rps)
    return requests
