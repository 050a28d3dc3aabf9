"""Scheduling policies and their shared cost model.

Two policies place the stages of a service chain onto replicas:

* centralized_solve computes an exact minimum-carbon assignment subject to
  an end-to-end latency budget. The chain structure makes this a
  latency-constrained shortest path over a layered replica graph, solved by
  label-setting with dominance pruning, so no external optimizer is needed
  and the optimum is exact.
* sidecar_next_hop is the greedy per-hop rule a sidecar runs against its
  (possibly stale) metadata snapshot: filter by capacity and by latency
  feasibility, then pick the cheapest carbon + weighted-latency score.

Both estimate a hop the same way: route latency + payload push + work/speed
plus a queue-wait term from the observed queue length. Estimators do not
forecast execution-time contention; the engine is the ground truth.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .metadata import HostMetrics, MetadataSnapshot
from .platform import Platform, exec_carbon
from .workload import ReplicaInstance, ServiceChain


@dataclass(frozen=True)
class PlacementCost:
    """Score components of one placement: grams of CO2 and estimated seconds."""

    carbon: float
    est_latency_contrib: float


@dataclass(frozen=True)
class ExecutionPath:
    """A full chain assignment chosen up front by the centralized policy."""

    request_id: str
    assignments: tuple[str, ...]  # replica id per stage, in chain order
    total_cost: float
    est_latency: float


@dataclass(frozen=True)
class HopDecision:
    """One sidecar choice: where the next stage runs and why."""

    stage_index: int
    replica_id: str
    cost: PlacementCost
    score: float
    decision_wallclock: float


def carbon_per_request(platform: Platform, host_id: str, work: float) -> float:
    """Grams of CO2 one request's stage emits when executed on this host."""
    host = platform.host(host_id)
    return exec_carbon(host, platform.region_of(host_id), work / host.speed)


def queue_wait_estimate(
    queue_length: int, work: float, speed: float, actor_pool: int, cores: int
) -> float:
    """Expected wait behind queue_length requests draining at pool speed."""
    return queue_length * (work / speed) / min(actor_pool, cores)


def estimate_hop_latency(
    platform: Platform,
    src_host: str,
    replica: ReplicaInstance,
    work: float,
    payload: float,
    metrics: HostMetrics | None = None,
) -> float:
    """Estimated seconds for one hop: transfer, processing, and queue wait."""
    host = platform.host(replica.host_id)
    est = platform.transfer_seconds(src_host, replica.host_id, payload) + work / host.speed
    if metrics is not None:
        est += queue_wait_estimate(
            metrics.queue_length, work, host.speed, replica.actor_pool, host.cores
        )
    return est


def replica_available(replica: ReplicaInstance, metrics: HostMetrics) -> bool:
    """Capacity filter: the replica's host shows a free actor slot."""
    return metrics.busy_actors < replica.actor_pool


def _stage_payload(chain: ServiceChain, stage_index: int) -> float:
    if stage_index == 0:
        return chain.request_payload
    return chain.stages[stage_index - 1].payload_out


def centralized_solve(
    chain: ServiceChain,
    replicas_by_service: dict[str, list[ReplicaInstance]],
    metrics: dict[str, HostMetrics],
    platform: Platform,
    origin: str,
    *,
    request_id: str = "",
    dominance: bool = True,
) -> ExecutionPath | None:
    """Exact minimum-carbon chain assignment within the latency budget.

    Returns None (infeasible) when some stage has no replica with free
    capacity or no assignment's estimated latency fits the budget.

    The carbon objective is additive per stage and the latency constraint is
    additive per hop, so the search space is the layered graph origin ->
    stage-1 replicas -> ... -> stage-n replicas with n*R nodes and n*R^2
    edges. Three exact phases, cheapest first:

    1. cheapest assignment ignoring latency; if even the worst-case path
       latency fits the budget, or the cheapest path itself fits, it is the
       optimum;
    2. if the sum of per-layer minimum edge latencies exceeds the budget,
       no assignment is feasible;
    3. otherwise label-setting over the layers, where a label (cost,
       latency) is dropped if another label reaches the same node with both
       components <= (dominance), or if its latency plus an admissible
       remaining-work floor already exceeds the budget.
    """
    n = len(chain.stages)
    budget = chain.latency_budget
    idx = platform.host_index
    lat_t = platform.latency_table
    bw_t = platform.bandwidth_table
    max_speed = platform.max_speed

    # per layer: sorted candidates with capacity, their host rows, carbon and
    # fixed (processing + queue wait) latency terms
    layers = []
    for i, stage in enumerate(chain.stages):
        cands = [
            r
            for r in replicas_by_service.get(stage.service_id, ())
            if replica_available(r, metrics[r.host_id])
        ]
        if not cands:
            return None
        cands.sort(key=lambda r: r.replica_id)
        hidx = np.array([idx[r.host_id] for r in cands])
        carbon = np.array([carbon_per_request(platform, r.host_id, stage.work) for r in cands])
        fixed = np.array(
            [
                stage.work / platform.host(r.host_id).speed
                + queue_wait_estimate(
                    metrics[r.host_id].queue_length,
                    stage.work,
                    platform.host(r.host_id).speed,
                    r.actor_pool,
                    platform.host(r.host_id).cores,
                )
                for r in cands
            ]
        )
        layers.append((cands, hidx, carbon, fixed, _stage_payload(chain, i)))

    def hop_matrix(prev_hidx: np.ndarray, layer) -> np.ndarray:
        _, hidx, _, fixed, payload = layer
        rows = lat_t[np.ix_(prev_hidx, hidx)] + payload / bw_t[np.ix_(prev_hidx, hidx)]
        return rows + fixed[None, :]

    # phase 1: cheapest-per-layer path (the unconstrained optimum, since cost
    # is separable), plus layer-wise best/worst edge latency bounds
    origin_row = np.array([idx[origin]])
    prev_hidx = origin_row
    prev_pick = 0
    picks: list[int] = []
    path_lat = 0.0
    total_cost = 0.0
    worst_lat = 0.0
    lower_lat = 0.0
    for layer in layers:
        _, hidx, carbon, _, _ = layer
        M = hop_matrix(prev_hidx, layer)
        v = int(np.argmin(carbon))  # first index on ties = lowest replica_id
        path_lat += float(M[prev_pick, v])
        total_cost += float(carbon[v])
        worst_lat += float(M.max())
        lower_lat += float(M.min())
        picks.append(v)
        prev_hidx = hidx
        prev_pick = v
    if worst_lat <= budget or path_lat <= budget:
        assignments = tuple(layers[i][0][v].replica_id for i, v in enumerate(picks))
        return ExecutionPath(request_id, assignments, total_cost, path_lat)
    if lower_lat > budget:
        return None

    # phase 3: exact label-setting; labels are (cost, lat, parent) per node
    floor_rest = [chain.work_after(i) / max_speed for i in range(n)]
    prev_hidx = origin_row
    labels: dict[int, list[tuple[float, float, tuple | None]]] = {0: [(0.0, 0.0, None)]}
    history: list[dict[int, list[tuple[float, float, tuple | None]]]] = []
    for i, layer in enumerate(layers):
        _, hidx, carbon, _, _ = layer
        M = hop_matrix(prev_hidx, layer)
        new_labels: dict[int, list[tuple[float, float, tuple | None]]] = {}
        for v in range(len(hidx)):
            cands: list[tuple[float, float, tuple | None]] = []
            cv = float(carbon[v])
            for u, labs in labels.items():
                m = float(M[u, v])
                for li, (c, l, _) in enumerate(labs):
                    nl = l + m
                    if nl + floor_rest[i] > budget:
                        continue
                    cands.append((c + cv, nl, (u, li)))
            if not cands:
                continue
            if dominance:
                cands.sort(key=lambda t: (t[0], t[1]))
                kept: list[tuple[float, float, tuple | None]] = []
                best_l = float("inf")
                for lab in cands:
                    if lab[1] < best_l:
                        kept.append(lab)
                        best_l = lab[1]
                cands = kept
            new_labels[v] = cands
        if not new_labels:
            return None
        history.append(new_labels)
        labels = new_labels
        prev_hidx = hidx

    best_node, best_li, best_lab = None, None, None
    for v in sorted(labels):
        for li, lab in enumerate(labels[v]):
            if best_lab is None or (lab[0], lab[1]) < (best_lab[0], best_lab[1]):
                best_node, best_li, best_lab = v, li, lab
    assert best_lab is not None

    assignment_rev = []
    node, li = best_node, best_li
    for i in range(n - 1, -1, -1):
        assignment_rev.append(layers[i][0][node].replica_id)
        parent = history[i][node][li][2]
        if parent is not None:
            node, li = parent
    return ExecutionPath(
        request_id, tuple(reversed(assignment_rev)), best_lab[0], best_lab[1]
    )


def sidecar_next_hop(
    stage_index: int,
    chain: ServiceChain,
    candidate_replicas: list[ReplicaInstance],
    snapshot: MetadataSnapshot,
    platform: Platform,
    here: str,
    remaining_budget: float,
    *,
    w_lat: float = 1.0,
    saturate_to_queue: bool = False,
) -> HopDecision | None:
    """Greedy choice of where the next stage runs, from one sidecar's view.

    Candidates must look available (snapshot busy_actors below the pool) and
    must leave room in the budget for an admissible floor of the remaining
    stages' processing. Among survivors the score carbon + w_lat * est_hop
    decides, ties to the lowest replica id. Returns None to drop the
    request. When saturate_to_queue is set and every candidate is busy, the
    latency-feasible best is taken anyway and the request queues there.

    Cost is O(R) in the candidate count and independent of chain length.
    """
    t0 = time.perf_counter()
    stage = chain.stages[stage_index]
    payload = _stage_payload(chain, stage_index)
    floor_rest = chain.work_after(stage_index) / platform.max_speed
    view = snapshot.view

    best: tuple[tuple[float, str], ReplicaInstance, float, float] | None = None
    best_busy: tuple[tuple[float, str], ReplicaInstance, float, float] | None = None
    for r in candidate_replicas:
        m = view.get(r.host_id)
        if m is None:
            continue
        est = estimate_hop_latency(platform, here, r, stage.work, payload, m)
        if est + floor_rest > remaining_budget:
            continue
        carbon = carbon_per_request(platform, r.host_id, stage.work)
        key = (carbon + w_lat * est, r.replica_id)
        if replica_available(r, m):
            if best is None or key < best[0]:
                best = (key, r, carbon, est)
        elif saturate_to_queue:
            if best_busy is None or key < best_busy[0]:
                best_busy = (key, r, carbon, est)

    chosen = best if best is not None else best_busy
    if chosen is None:
        return None
    key, replica, carbon, est = chosen
    return HopDecision(
        stage_index=stage_index,
        replica_id=replica.replica_id,
        cost=PlacementCost(carbon=carbon, est_latency_contrib=est),
        score=key[0],
        decision_wallclock=time.perf_counter() - t0,
    )


def latency_central(l_sched: float, twl: list[float], l_proc: list[float]) -> float:
    """Closed-form total latency of a centrally scheduled chain.

    One scheduling delay up front, transfer+processing for the first n-1
    stages, then the final stage's processing. Expects n-1 transfer terms
    for n processing terms.
    """
    if len(l_proc) < 1:
        raise DomainError("need at least one processing term")
    if len(twl) != len(l_proc) - 1:
        raise DomainError(
            f"expected {len(l_proc) - 1} transfer terms for {len(l_proc)} stages, got {len(twl)}"
        )
    return l_sched + sum(t + p for t, p in zip(twl, l_proc[:-1])) + l_proc[-1]


def latency_decentral(
    twl: list[float], l_proc: list[float], l_sidecar: list[float]
) -> float:
    """Closed-form total latency of a sidecar-scheduled chain.

    Transfer and processing for every stage, plus a sidecar decision after
    each stage except the last.
    """
    if len(l_proc) < 1:
        raise DomainError("need at least one processing term")
    if len(twl) != len(l_proc):
        raise DomainError(
            f"expected {len(l_proc)} transfer terms for {len(l_proc)} stages, got {len(twl)}"
        )
    if len(l_sidecar) != len(l_proc) - 1:
        raise DomainError(
            f"expected {len(l_proc) - 1} sidecar terms for {len(l_proc)} stages, got {len(l_sidecar)}"
        )
    return sum(twl) + sum(l_proc) + sum(l_sidecar)
