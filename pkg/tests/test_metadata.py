"""Eventually consistent metrics layer: delays, last-writer-wins, convergence."""
from __future__ import annotations

import random

import pytest

from meshsim.errors import DomainError
from meshsim.metadata import HostMetrics, MetadataStore, idle_metrics
from meshsim.platform import PlatformConfig, build_platform


def two_region_platform():
    # region00: h0000, h0001; region01: h0002, h0003
    return build_platform(PlatformConfig(hosts_total=4, regions=2))


def metrics(host_id: str, busy: int, at: float) -> HostMetrics:
    return HostMetrics(
        host_id=host_id, cpu_utilization=0.0, busy_actors=busy, queue_length=0, measured_at=at
    )


def test_host_metrics_invariants():
    with pytest.raises(DomainError):
        HostMetrics("h", cpu_utilization=-0.1, busy_actors=0, queue_length=0, measured_at=0.0)
    with pytest.raises(DomainError):
        HostMetrics("h", cpu_utilization=1.1, busy_actors=0, queue_length=0, measured_at=0.0)
    with pytest.raises(DomainError):
        HostMetrics("h", cpu_utilization=0.5, busy_actors=-1, queue_length=0, measured_at=0.0)
    with pytest.raises(DomainError):
        HostMetrics("h", cpu_utilization=0.5, busy_actors=0, queue_length=-1, measured_at=0.0)


def test_store_rejects_negative_delays():
    with pytest.raises(DomainError):
        MetadataStore(two_region_platform(), intra_region_delay_s=-0.1)
    with pytest.raises(DomainError):
        MetadataStore(two_region_platform(), inter_region_delay_s=-1.0)


def test_fresh_store_bootstraps_idle_everywhere():
    p = two_region_platform()
    store = MetadataStore(p, intra_region_delay_s=0.5, inter_region_delay_s=2.0)
    snap = store.snapshot("h0000", 0.0)
    assert set(snap.view) == {h.id for h in p.hosts}
    for hid, m in snap.view.items():
        assert (m.busy_actors, m.queue_length, m.cpu_utilization) == (0, 0, 0.0)
        assert m == idle_metrics(hid)


def test_propagation_delay_by_region_pair():
    p = two_region_platform()
    store = MetadataStore(p, intra_region_delay_s=0.1, inter_region_delay_s=1.0)
    assert store.propagation_delay("h0000", "h0001") == 0.1
    assert store.propagation_delay("h0000", "h0000") == 0.1
    assert store.propagation_delay("h0000", "h0002") == 1.0
    assert store.propagation_delay("h0002", "h0000") == 1.0


def test_publish_not_visible_before_delay():
    p = two_region_platform()
    store = MetadataStore(p, intra_region_delay_s=1.0, inter_region_delay_s=1.0)
    store.publish(metrics("h0001", busy=5, at=0.0), now=0.0)
    # same instant: still the bootstrap value
    assert store.snapshot("h0000", 0.0).view["h0001"].busy_actors == 0
    assert store.snapshot("h0000", 0.999).view["h0001"].busy_actors == 0
    assert store.snapshot("h0000", 1.0).view["h0001"].busy_actors == 5
    assert store.snapshot("h0000", 5.0).view["h0001"].busy_actors == 5


def test_jump_at_five_with_delay_two_becomes_visible_at_seven():
    p = two_region_platform()
    store = MetadataStore(p, intra_region_delay_s=2.0, inter_region_delay_s=2.0)
    store.publish(metrics("h0001", busy=1, at=0.0), now=0.0)
    store.publish(metrics("h0001", busy=9, at=5.0), now=5.0)
    for t in (2.0, 4.0, 5.0, 6.999):
        assert store.snapshot("h0000", t).view["h0001"].busy_actors == 1
    for t in (7.0, 7.5, 100.0):
        assert store.snapshot("h0000", t).view["h0001"].busy_actors == 9


def test_delay_zero_snapshot_equals_authoritative_state():
    p = two_region_platform()
    store = MetadataStore(p, intra_region_delay_s=0.0, inter_region_delay_s=0.0)
    store.publish(metrics("h0002", busy=3, at=1.5), now=1.5)
    assert store.snapshot("h0000", 1.5).view["h0002"].busy_actors == 3
    store.publish(metrics("h0002", busy=4, at=1.5), now=1.5)
    assert store.snapshot("h0000", 1.5).view["h0002"].busy_actors == 4


def test_later_publish_wins():
    p = two_region_platform()
    store = MetadataStore(p, intra_region_delay_s=0.1, inter_region_delay_s=0.1)
    store.publish(metrics("h0000", busy=1, at=0.0), now=0.0)
    store.publish(metrics("h0000", busy=2, at=1.0), now=1.0)
    assert store.snapshot("h0000", 2.0).view["h0000"].busy_actors == 2


def test_same_instant_publishes_resolve_by_measurement_time():
    p = two_region_platform()
    store = MetadataStore(p, intra_region_delay_s=0.0, inter_region_delay_s=0.0)
    newer = metrics("h0000", busy=7, at=3.0)
    older = metrics("h0000", busy=1, at=2.0)
    store.publish(newer, now=3.0)
    store.publish(older, now=3.0)  # out-of-order write of a stale sample
    assert store.snapshot("h0001", 3.0).view["h0000"].busy_actors == 7


def test_snapshot_restricts_to_requested_hosts():
    p = two_region_platform()
    store = MetadataStore(p)
    snap = store.snapshot("h0000", 0.0, host_ids=["h0001", "h0003"])
    assert set(snap.view) == {"h0001", "h0003"}
    assert snap.observer_id == "h0000"
    assert snap.taken_at == 0.0


def test_monotone_convergence_after_publications_stop():
    p = two_region_platform()
    intra, inter = 0.1, 1.0
    store = MetadataStore(p, intra_region_delay_s=intra, inter_region_delay_s=inter)
    rng = random.Random(0)
    last: dict[str, HostMetrics] = {}
    now = 0.0
    for _ in range(200):
        now += rng.uniform(0.0, 0.3)
        hid = rng.choice([h.id for h in p.hosts])
        m = metrics(hid, busy=rng.randint(0, 30), at=now)
        store.publish(m, now)
        last[hid] = m
    stop = now
    for observer in (h.id for h in p.hosts):
        for t in (stop + inter, stop + inter + 5.0):
            snap = store.snapshot(observer, t)
            for hid, m in last.items():
                assert snap.view[hid] == m
            for entry in snap.view.values():
                assert entry.measured_at <= snap.taken_at


def test_staleness_bounded_by_interval_plus_delay():
    # publishing every tick, an observer's view is at most interval+delay old
    p = two_region_platform()
    interval, inter = 0.5, 1.0
    store = MetadataStore(p, intra_region_delay_s=0.1, inter_region_delay_s=inter)
    ticks = [i * interval for i in range(21)]
    for t in ticks:
        for h in p.hosts:
            store.publish(metrics(h.id, busy=int(t * 10), at=t), now=t)
    for t in (3.7, 5.0, 10.0):
        snap = store.snapshot("h0000", t)
        for hid, m in snap.view.items():
            delay = store.propagation_delay("h0000", hid)
            assert t - m.measured_at <= interval + delay + 1e-12
