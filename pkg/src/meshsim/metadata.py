"""Eventually consistent host-metrics layer between replicas and sidecars.

Every host's published metrics become visible to an observer only after a
propagation delay that depends on whether observer and subject share a
region. Reads never block: a snapshot returns, per host, the newest entry
that has already propagated, so sidecars act on bounded-stale state rather
than ground truth. With both delays at zero (and continuous publication)
snapshots equal ground truth, which the tests use as an oracle mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError
from .platform import Platform


@dataclass(frozen=True)
class HostMetrics:
    """One host's load sample; counts aggregate all replicas on the host."""

    host_id: str
    cpu_utilization: float
    busy_actors: int
    queue_length: int
    measured_at: float

    def __post_init__(self):
        if not 0.0 <= self.cpu_utilization <= 1.0:
            raise DomainError("cpu_utilization must be in [0, 1]")
        if self.busy_actors < 0 or self.queue_length < 0:
            raise DomainError("busy_actors and queue_length must be >= 0")


@dataclass(frozen=True)
class MetadataSnapshot:
    observer_id: str
    view: dict[str, HostMetrics]
    taken_at: float


def idle_metrics(host_id: str, at: float = 0.0) -> HostMetrics:
    return HostMetrics(host_id, 0.0, 0, 0, at)


class MetadataStore:
    """Propagation-delayed, last-writer-wins view of host metrics.

    Entries are kept per host as (publish_time, metrics) in publish order;
    a snapshot at time t sees the newest entry with publish_time <= t - d
    where d is the observer/host propagation delay. The store starts with
    an always-visible idle entry per host so early reads never come up
    empty.
    """

    def __init__(
        self,
        platform: Platform,
        intra_region_delay_s: float = 0.1,
        inter_region_delay_s: float = 1.0,
    ):
        if intra_region_delay_s < 0 or inter_region_delay_s < 0:
            raise DomainError("propagation delays must be >= 0")
        self._platform = platform
        self.intra_region_delay_s = intra_region_delay_s
        self.inter_region_delay_s = inter_region_delay_s
        self._max_delay = max(intra_region_delay_s, inter_region_delay_s)
        self._entries: dict[str, list[tuple[float, HostMetrics]]] = {
            h.id: [(-math.inf, idle_metrics(h.id))] for h in platform.hosts
        }

    def propagation_delay(self, observer_id: str, host_id: str) -> float:
        if self._platform.region_of(observer_id) is self._platform.region_of(host_id):
            return self.intra_region_delay_s
        return self.inter_region_delay_s

    def publish(self, metrics: HostMetrics, now: float) -> None:
        entries = self._entries[metrics.host_id]
        entries.append((now, metrics))
        # last writer wins: same-instant publishes resolve by measured_at
        if len(entries) >= 2 and entries[-2][0] == now:
            if entries[-2][1].measured_at > entries[-1][1].measured_at:
                entries[-2], entries[-1] = entries[-1], entries[-2]
        # Older entries can only be read back through cutoffs >= now - max
        # delay, so everything strictly before the newest entry at or below
        # that horizon is unreachable and can go.
        horizon = now - self._max_delay
        keep_from = 0
        for i, (pub, _) in enumerate(entries):
            if pub <= horizon:
                keep_from = i
        if keep_from:
            del entries[:keep_from]

    def snapshot(
        self,
        observer_id: str,
        now: float,
        host_ids: list[str] | None = None,
    ) -> MetadataSnapshot:
        """The observer's current (possibly stale) view; never blocks."""
        targets = host_ids if host_ids is not None else list(self._entries)
        view: dict[str, HostMetrics] = {}
        for hid in targets:
            cutoff = now - self.propagation_delay(observer_id, hid)
            entries = self._entries[hid]
            chosen = None
            for pub, metrics in entries:
                if pub <= cutoff:
                    chosen = metrics  # later entries win: publish order is LWW
                else:
                    break
            if chosen is None:
                chosen = entries[0][1]
            view[hid] = chosen
        return MetadataSnapshot(observer_id=observer_id, view=view, taken_at=now)
