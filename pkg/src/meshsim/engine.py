"""Deterministic discrete-event engine for chain execution.

Events are processed in (time, seq) order from a single heap, so a run is a
pure function of its inputs. CPU contention follows a fluid fair-sharing
model: the tasks active on a host each progress at speed * min(1, C/n), and
rates are recomputed whenever a task joins or leaves, which reproduces the
"n active tasks over C cores stretch processing by n/C" behavior exactly
between membership changes.

A request's life: a scheduling decision at its origin (the full-chain solve
in centralized mode, the first sidecar decision in decentralized mode),
then per stage a transfer leg, FIFO admission into the replica's actor
pool, fluid execution, and in decentralized mode a sidecar decision for the
next stage. The final stage needs no further decision. Each hop's record
keeps every timestamp so makespans reconcile exactly against the analytic
decompositions.
"""
from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .errors import DomainError, EngineError
from .metadata import HostMetrics, MetadataSnapshot, MetadataStore
from .platform import Platform, exec_carbon
from .schedulers import centralized_solve, sidecar_next_hop
from .workload import ReplicaInstance, Request

CENTRALIZED = "centralized"
DECENTRALIZED = "decentralized"
COMPLETED = "completed"
DROPPED = "dropped"

# a completion is due when its residual execution time is below this
RESIDUAL_TOL_S = 1e-12


class EventKind(Enum):
    ARRIVAL = "arrival"
    TRANSFER_DONE = "transfer_done"
    ADMIT_TO_ACTOR = "admit_to_actor"
    EXEC_DONE = "exec_done"
    SIDECAR_DECISION_DONE = "sidecar_decision_done"
    SCHEDULER_DONE = "scheduler_done"
    # control-plane internals
    SCHEDULER_ARRIVE = "scheduler_arrive"
    SCHEDULER_SOLVED = "scheduler_solved"
    METADATA_TICK = "metadata_tick"


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    kind: EventKind
    payload: tuple


class HostCpuState:
    """Fluid fair-shared CPU of one host.

    tasks maps task id -> remaining flop, in admission order; equal-work
    tasks therefore finish in admission order, and simultaneous finishers
    are reported in admission order.
    """

    __slots__ = ("host_id", "cores", "speed", "tasks", "last_update", "epoch", "busy_core_seconds")

    def __init__(self, host_id: str, cores: int, speed: float):
        self.host_id = host_id
        self.cores = cores
        self.speed = speed
        self.tasks: dict[tuple, float] = {}
        self.last_update = 0.0
        self.epoch = 0
        self.busy_core_seconds = 0.0

    def _rate(self) -> float:
        return self.speed * min(1.0, self.cores / len(self.tasks))

    def advance(self, now: float) -> list[tuple]:
        """Integrate progress up to now; return tasks that just finished."""
        dt = now - self.last_update
        if dt < -1e-9:
            raise EngineError(f"host {self.host_id}: time ran backwards by {-dt}")
        if self.tasks and dt > 0:
            rate = self._rate()
            self.busy_core_seconds += min(len(self.tasks), self.cores) * dt
            for tid in self.tasks:
                self.tasks[tid] -= rate * dt
        self.last_update = now
        if not self.tasks:
            return []
        tol = self._rate() * RESIDUAL_TOL_S
        done = [tid for tid, rem in self.tasks.items() if rem <= tol]
        for tid in done:
            del self.tasks[tid]
        return done

    def add_task(self, tid: tuple, work: float) -> None:
        if tid in self.tasks:
            raise EngineError(f"duplicate task {tid} on host {self.host_id}")
        self.tasks[tid] = work

    def next_completion_at(self) -> float | None:
        if not self.tasks:
            return None
        return self.last_update + max(min(self.tasks.values()), 0.0) / self._rate()


def advance_cpu(state: HostCpuState, now: float) -> list[tuple]:
    """Module-level alias for HostCpuState.advance, for direct model checks."""
    return state.advance(now)


def utilization_bound(offered: float, actors: int, cores: int) -> float:
    """Upper bound on CPU utilization: min(offered, actors)/cores, capped at 1."""
    if offered < 0 or actors < 0 or cores < 1:
        raise DomainError("offered and actors must be >= 0, cores >= 1")
    return min(min(offered, actors) / cores, 1.0)


def host_energy_joules(
    power_idle: float, power_max: float, cores: int, busy_core_seconds: float, horizon_s: float
) -> float:
    """Energy of one host over the horizon under the linear power model.

    Idle draw runs for the whole horizon; the dynamic band (power_max -
    power_idle) is charged per busy core-second. A fully loaded host thus
    draws exactly power_max, an idle one exactly power_idle.
    """
    if horizon_s < 0 or busy_core_seconds < 0:
        raise DomainError("horizon and busy core-seconds must be >= 0")
    if busy_core_seconds > cores * horizon_s * (1 + 1e-12):
        raise DomainError("busy core-seconds exceed cores * horizon")
    return power_idle * horizon_s + (power_max - power_idle) / cores * busy_core_seconds


@dataclass
class EngineOptions:
    """Knobs of one run; defaults match the reference scenario."""

    sidecar_latency_s: float = 1e-4
    sched_overhead_s: float = 2e-3  # solver occupancy per request, FIFO at the scheduler
    sched_rtt_s: float | None = None  # None: 2x route latency origin->scheduler host
    w_lat: float = 1.0
    saturate_to_queue: bool = False
    metadata_interval_s: float = 1.0  # 0 means publish on every state change
    intra_region_delay_s: float = 0.1
    inter_region_delay_s: float = 1.0
    scheduler_host: str | None = None  # None: last host of the platform
    duration_s: float | None = None  # horizon floor for energy accounting
    shadow_ground_truth: bool = False  # audit sidecar choices against fresh metrics


@dataclass
class HopRecord:
    """Timestamps of one node the request visited.

    stage 0 is the client: its "decision" span is the scheduling delay and
    its transfer is the leg into stage 1. Stage i >= 1 covers queueing and
    execution at that replica, the decision for the next stage (zero-width
    in centralized mode), and the transfer toward it. Within a record the
    listed timestamps are non-decreasing.
    """

    stage: int
    replica_id: str | None
    host_id: str
    t_queue_in: float = math.nan
    t_admit: float = math.nan
    t_exec_start: float = math.nan
    t_exec_end: float = math.nan
    t_sidecar_done: float = math.nan
    t_transfer_start: float = math.nan
    t_transfer_end: float = math.nan
    carbon_g: float = 0.0


@dataclass
class ExecutionRecord:
    request_id: str
    status: str
    hops: list[HopRecord]
    submit_s: float
    complete_s: float = math.nan

    @property
    def makespan_s(self) -> float:
        return self.complete_s - self.submit_s

    @property
    def sched_delay_s(self) -> float:
        """The initial decision: full-chain solve or the client's sidecar."""
        return self.hops[0].t_sidecar_done - self.hops[0].t_queue_in

    def twl_s(self) -> list[float]:
        """Transfer leg durations, one per hop taken."""
        out = []
        for hop in self.hops:
            span = hop.t_transfer_end - hop.t_transfer_start
            if not math.isnan(span) and (hop.stage < len(self.hops) - 1):
                out.append(span)
        return out

    def proc_s(self) -> list[float]:
        """Queue+execution span per service stage reached."""
        return [
            h.t_exec_end - h.t_queue_in
            for h in self.hops[1:]
            if not math.isnan(h.t_exec_end)
        ]

    def sidecar_s(self) -> list[float]:
        """Decision spans after stages 1..n-1 (zero-width when centralized)."""
        return [
            h.t_sidecar_done - h.t_exec_end
            for h in self.hops[1:-1]
            if not math.isnan(h.t_sidecar_done)
        ]

    def carbon_g(self) -> float:
        return sum(h.carbon_g for h in self.hops)


@dataclass
class SimulationResult:
    records: list[ExecutionRecord]
    end_time: float
    host_energy_j: dict[str, float]
    total_energy_j: float
    total_carbon_g: float
    events_processed: int
    # (request_id, stage_index, snapshot_choice, ground_truth_choice)
    decision_mismatches: list[tuple[str, int, str | None, str | None]] = field(
        default_factory=list
    )


class _Ctx:
    __slots__ = ("request", "hops", "path", "status", "complete_at")

    def __init__(self, request: Request):
        self.request = request
        self.hops: list[HopRecord] = []
        self.path = None
        self.status: str | None = None
        self.complete_at = math.nan


class _Engine:
    def __init__(
        self,
        platform: Platform,
        replicas: list[ReplicaInstance],
        requests: list[Request],
        scheduler: str,
        options: EngineOptions,
    ):
        if scheduler not in (CENTRALIZED, DECENTRALIZED):
            raise DomainError(f"unknown scheduler {scheduler!r}")
        self.platform = platform
        self.scheduler = scheduler
        self.opt = options
        self.requests = sorted(requests, key=lambda r: (r.submit_time, r.request_id))
        self.replica_by_id: dict[str, ReplicaInstance] = {}
        self.replicas_by_service: dict[str, list[ReplicaInstance]] = {}
        self.replicas_on_host: dict[str, list[ReplicaInstance]] = {}
        host_ids = {h.id for h in platform.hosts}
        for r in replicas:
            if r.replica_id in self.replica_by_id:
                raise DomainError(f"duplicate replica id {r.replica_id}")
            if r.host_id not in host_ids:
                raise DomainError(
                    f"replica {r.replica_id} placed on unknown host {r.host_id}"
                )
            self.replica_by_id[r.replica_id] = r
            self.replicas_by_service.setdefault(r.service_id, []).append(r)
            self.replicas_on_host.setdefault(r.host_id, []).append(r)
        self.busy: dict[str, int] = {r.replica_id: 0 for r in replicas}
        self.cpu = {
            h.id: HostCpuState(h.id, h.cores, h.speed) for h in platform.hosts
        }
        self.store = MetadataStore(
            platform,
            intra_region_delay_s=options.intra_region_delay_s,
            inter_region_delay_s=options.inter_region_delay_s,
        )
        self.sched_host = options.scheduler_host or platform.hosts[-1].id
        self.sched_busy = False
        self.sched_backlog: deque[str] = deque()
        self.ctxs: dict[str, _Ctx] = {}
        self.now = 0.0
        self.heap: list[tuple[float, int, EventKind, tuple]] = []
        self.seq = itertools.count()
        self.dirty: set[str] = set()
        self.mismatches: list[tuple[str, int, str | None, str | None]] = []
        self.events_processed = 0
        self.open_requests = 0

    # -- plumbing ---------------------------------------------------------

    def schedule(self, at: float, kind: EventKind, payload: tuple) -> None:
        heapq.heappush(self.heap, (at, next(self.seq), kind, payload))

    def measure(self, host_id: str) -> HostMetrics:
        cpu = self.cpu[host_id]
        active = len(cpu.tasks)
        qlen = sum(len(r.queue) for r in self.replicas_on_host.get(host_id, ()))
        return HostMetrics(
            host_id=host_id,
            cpu_utilization=min(active, cpu.cores) / cpu.cores,
            busy_actors=active,
            queue_length=qlen,
            measured_at=self.now,
        )

    def mark_dirty(self, host_id: str) -> None:
        self.dirty.add(host_id)

    def flush_dirty(self) -> None:
        for host_id in sorted(self.dirty):
            self.store.publish(self.measure(host_id), self.now)
        self.dirty.clear()

    def sched_oneway(self, origin: str) -> float:
        if self.opt.sched_rtt_s is not None:
            return self.opt.sched_rtt_s / 2.0
        return self.platform.route_latency(origin, self.sched_host)

    def sync_host(self, host_id: str) -> None:
        cpu = self.cpu[host_id]
        done = cpu.advance(self.now)
        if done:
            cpu.epoch += 1
            self.mark_dirty(host_id)
            for tid in done:
                self.complete_exec(tid)

    def resched_host(self, host_id: str) -> None:
        cpu = self.cpu[host_id]
        at = cpu.next_completion_at()
        if at is not None:
            self.schedule(at, EventKind.EXEC_DONE, (host_id, cpu.epoch))

    # -- decisions --------------------------------------------------------

    def decide_next(self, ctx: _Ctx, stage_index: int, here: str) -> object:
        if self.opt.metadata_interval_s == 0 and self.dirty:
            self.flush_dirty()  # publish-on-change: the view must be current
        chain = ctx.request.chain
        service_id = chain.stages[stage_index].service_id
        candidates = self.replicas_by_service.get(service_id, [])
        hosts = sorted({r.host_id for r in candidates})
        remaining = chain.latency_budget - (self.now - ctx.request.submit_time)
        snap = self.store.snapshot(here, self.now, hosts)
        decision = sidecar_next_hop(
            stage_index,
            chain,
            candidates,
            snap,
            self.platform,
            here,
            remaining,
            w_lat=self.opt.w_lat,
            saturate_to_queue=self.opt.saturate_to_queue,
        )
        if self.opt.shadow_ground_truth:
            truth = MetadataSnapshot(
                observer_id=here,
                view={h: self.measure(h) for h in hosts},
                taken_at=self.now,
            )
            want = sidecar_next_hop(
                stage_index,
                chain,
                candidates,
                truth,
                self.platform,
                here,
                remaining,
                w_lat=self.opt.w_lat,
                saturate_to_queue=self.opt.saturate_to_queue,
            )
            got_id = decision.replica_id if decision else None
            want_id = want.replica_id if want else None
            if got_id != want_id:
                self.mismatches.append(
                    (ctx.request.request_id, stage_index, got_id, want_id)
                )
        return decision

    def solve_request(self, ctx: _Ctx) -> object:
        chain = ctx.request.chain
        hosts = sorted(
            {
                r.host_id
                for s in chain.stages
                for r in self.replicas_by_service.get(s.service_id, ())
            }
        )
        metrics = {h: self.measure(h) for h in hosts}
        return centralized_solve(
            chain,
            self.replicas_by_service,
            metrics,
            self.platform,
            ctx.request.origin_host,
            request_id=ctx.request.request_id,
        )

    # -- request lifecycle ------------------------------------------------

    def forward(self, ctx: _Ctx, stage_num: int, replica: ReplicaInstance) -> None:
        """Start the transfer leg into stage_num (1-based)."""
        prev_hop = ctx.hops[stage_num - 1]
        prev_hop.t_transfer_start = self.now
        chain = ctx.request.chain
        payload = chain.request_payload if stage_num == 1 else chain.stages[stage_num - 2].payload_out
        tt = self.platform.transfer_seconds(prev_hop.host_id, replica.host_id, payload)
        self.schedule(
            self.now + tt,
            EventKind.TRANSFER_DONE,
            (ctx.request.request_id, stage_num, replica.replica_id),
        )

    def finish(self, ctx: _Ctx, status: str) -> None:
        if ctx.status is not None:
            raise EngineError(f"request {ctx.request.request_id} finished twice")
        ctx.status = status
        ctx.complete_at = self.now
        self.open_requests -= 1

    def complete_exec(self, tid: tuple) -> None:
        rid, stage_num = tid
        ctx = self.ctxs[rid]
        hop = ctx.hops[stage_num]
        hop.t_exec_end = self.now
        host = self.platform.host(hop.host_id)
        stage = ctx.request.chain.stages[stage_num - 1]
        hop.carbon_g = exec_carbon(
            host, self.platform.region_of(hop.host_id), stage.work / host.speed
        )
        replica = self.replica_by_id[hop.replica_id]
        self.busy[replica.replica_id] -= 1
        if replica.queue:
            rid2, s2 = replica.queue.popleft()
            self.busy[replica.replica_id] += 1
            self.schedule(self.now, EventKind.ADMIT_TO_ACTOR, (rid2, s2))
        self.mark_dirty(hop.host_id)

        n = len(ctx.request.chain)
        if stage_num == n:
            hop.t_sidecar_done = self.now
            hop.t_transfer_start = self.now
            hop.t_transfer_end = self.now
            self.finish(ctx, COMPLETED)
        elif self.scheduler == CENTRALIZED:
            hop.t_sidecar_done = self.now
            nxt = self.replica_by_id[ctx.path.assignments[stage_num]]
            self.forward(ctx, stage_num + 1, nxt)
        else:
            decision = self.decide_next(ctx, stage_num, hop.host_id)
            self.schedule(
                self.now + self.opt.sidecar_latency_s,
                EventKind.SIDECAR_DECISION_DONE,
                (rid, stage_num + 1, decision),
            )

    # -- event handlers ---------------------------------------------------

    def on_arrival(self, payload: tuple) -> None:
        (rid,) = payload
        ctx = self.ctxs[rid]
        req = ctx.request
        hop0 = HopRecord(stage=0, replica_id=None, host_id=req.origin_host)
        hop0.t_queue_in = hop0.t_admit = hop0.t_exec_start = hop0.t_exec_end = self.now
        ctx.hops.append(hop0)
        if self.scheduler == CENTRALIZED:
            self.schedule(
                self.now + self.sched_oneway(req.origin_host),
                EventKind.SCHEDULER_ARRIVE,
                (rid,),
            )
        else:
            decision = self.decide_next(ctx, 0, req.origin_host)
            self.schedule(
                self.now + self.opt.sidecar_latency_s,
                EventKind.SIDECAR_DECISION_DONE,
                (rid, 1, decision),
            )

    def on_scheduler_arrive(self, payload: tuple) -> None:
        (rid,) = payload
        if self.sched_busy:
            self.sched_backlog.append(rid)
        else:
            self.start_solve(rid)

    def start_solve(self, rid: str) -> None:
        self.sched_busy = True
        path = self.solve_request(self.ctxs[rid])
        self.schedule(
            self.now + self.opt.sched_overhead_s,
            EventKind.SCHEDULER_SOLVED,
            (rid, path),
        )

    def on_scheduler_solved(self, payload: tuple) -> None:
        rid, path = payload
        self.sched_busy = False
        if self.sched_backlog:
            self.start_solve(self.sched_backlog.popleft())
        ctx = self.ctxs[rid]
        self.schedule(
            self.now + self.sched_oneway(ctx.request.origin_host),
            EventKind.SCHEDULER_DONE,
            (rid, path),
        )

    def on_scheduler_done(self, payload: tuple) -> None:
        rid, path = payload
        ctx = self.ctxs[rid]
        ctx.hops[0].t_sidecar_done = self.now
        if path is None:
            self.finish(ctx, DROPPED)
            return
        ctx.path = path
        self.forward(ctx, 1, self.replica_by_id[path.assignments[0]])

    def on_sidecar_decision_done(self, payload: tuple) -> None:
        rid, stage_num, decision = payload
        ctx = self.ctxs[rid]
        ctx.hops[stage_num - 1].t_sidecar_done = self.now
        if decision is None:
            self.finish(ctx, DROPPED)
            return
        self.forward(ctx, stage_num, self.replica_by_id[decision.replica_id])

    def on_transfer_done(self, payload: tuple) -> None:
        rid, stage_num, replica_id = payload
        ctx = self.ctxs[rid]
        ctx.hops[stage_num - 1].t_transfer_end = self.now
        replica = self.replica_by_id[replica_id]
        hop = HopRecord(stage=stage_num, replica_id=replica_id, host_id=replica.host_id)
        hop.t_queue_in = self.now
        ctx.hops.append(hop)
        if self.busy[replica_id] < replica.actor_pool:
            self.busy[replica_id] += 1
            self.schedule(self.now, EventKind.ADMIT_TO_ACTOR, (rid, stage_num))
        else:
            replica.queue.append((rid, stage_num))
            self.mark_dirty(replica.host_id)

    def on_admit(self, payload: tuple) -> None:
        rid, stage_num = payload
        ctx = self.ctxs[rid]
        hop = ctx.hops[stage_num]
        hop.t_admit = hop.t_exec_start = self.now
        host_id = hop.host_id
        self.sync_host(host_id)  # settle any completion due at this instant first
        cpu = self.cpu[host_id]
        stage = ctx.request.chain.stages[stage_num - 1]
        cpu.add_task((rid, stage_num), stage.work)
        cpu.epoch += 1
        self.resched_host(host_id)
        self.mark_dirty(host_id)

    def on_exec_done(self, payload: tuple) -> None:
        host_id, epoch = payload
        cpu = self.cpu[host_id]
        if epoch != cpu.epoch:
            return  # superseded by a membership change
        self.sync_host(host_id)
        self.resched_host(host_id)

    def on_metadata_tick(self, payload: tuple) -> None:
        for host in self.platform.hosts:
            self.store.publish(self.measure(host.id), self.now)
        if self.open_requests > 0:
            self.schedule(
                self.now + self.opt.metadata_interval_s, EventKind.METADATA_TICK, ()
            )

    # -- main loop ---------------------------------------------------------

    def run(self) -> SimulationResult:
        for req in self.requests:
            if req.request_id in self.ctxs:
                raise DomainError(f"duplicate request id {req.request_id}")
            self.ctxs[req.request_id] = _Ctx(req)
            self.schedule(req.submit_time, EventKind.ARRIVAL, (req.request_id,))
        self.open_requests = len(self.requests)
        if self.opt.metadata_interval_s > 0 and self.scheduler == DECENTRALIZED:
            self.schedule(0.0, EventKind.METADATA_TICK, ())

        handlers = {
            EventKind.ARRIVAL: self.on_arrival,
            EventKind.TRANSFER_DONE: self.on_transfer_done,
            EventKind.ADMIT_TO_ACTOR: self.on_admit,
            EventKind.EXEC_DONE: self.on_exec_done,
            EventKind.SIDECAR_DECISION_DONE: self.on_sidecar_decision_done,
            EventKind.SCHEDULER_ARRIVE: self.on_scheduler_arrive,
            EventKind.SCHEDULER_SOLVED: self.on_scheduler_solved,
            EventKind.SCHEDULER_DONE: self.on_scheduler_done,
            EventKind.METADATA_TICK: self.on_metadata_tick,
        }
        publish_on_change = self.opt.metadata_interval_s == 0
        while self.heap:
            at, _seq, kind, payload = heapq.heappop(self.heap)
            if at < self.now - 1e-9:
                raise EngineError(f"event time {at} precedes clock {self.now}")
            self.now = max(self.now, at)
            handlers[kind](payload)
            self.events_processed += 1
            if publish_on_change and self.dirty:
                self.flush_dirty()

        if self.open_requests != 0:
            raise EngineError(f"{self.open_requests} requests never terminated")

        horizon = self.now
        if self.opt.duration_s is not None:
            horizon = max(horizon, self.opt.duration_s)
        host_energy: dict[str, float] = {}
        total_energy = 0.0
        for h in self.platform.hosts:
            cpu = self.cpu[h.id]
            if cpu.tasks:
                raise EngineError(f"host {h.id} still has tasks after drain")
            cpu.advance(horizon)
            energy = host_energy_joules(
                h.power_idle, h.power_max, h.cores, cpu.busy_core_seconds, horizon
            )
            host_energy[h.id] = energy
            total_energy += energy

        records = []
        total_carbon = 0.0
        for req in self.requests:
            ctx = self.ctxs[req.request_id]
            rec = ExecutionRecord(
                request_id=req.request_id,
                status=ctx.status,
                hops=ctx.hops,
                submit_s=req.submit_time,
                complete_s=ctx.complete_at if ctx.status == COMPLETED else math.nan,
            )
            total_carbon += rec.carbon_g()
            records.append(rec)

        return SimulationResult(
            records=records,
            end_time=horizon,
            host_energy_j=host_energy,
            total_energy_j=total_energy,
            total_carbon_g=total_carbon,
            events_processed=self.events_processed,
            decision_mismatches=self.mismatches,
        )


def run(
    platform: Platform,
    replicas: list[ReplicaInstance],
    requests: list[Request],
    scheduler: str,
    options: EngineOptions | None = None,
) -> SimulationResult:
    """Simulate the requests end to end; see module docstring for the model."""
    return _Engine(
        platform, replicas, requests, scheduler, options or EngineOptions()
    ).run()
