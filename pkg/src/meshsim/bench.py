"""Scenario runner, rate sweeps, and the decision-cost benchmark.

Everything user-facing funnels through here: run_scenario executes one
configured scenario and emits a per-request CSV plus a JSON summary;
sweep_rates compares both schedulers across arrival rates and plots the
makespan trend; bench_complexity times the two policy functions directly on
synthetic state (outside the event loop) so the measured wall time is the
algorithmic cost alone.

Float columns are written with repr so re-parsing reproduces the exact
binary values and repeated seeded runs produce byte-identical files.
"""
from __future__ import annotations

import csv
import gc
import json
import math
import os
import time
from dataclasses import asdict, dataclass, replace

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy import stats as sstats

from . import engine
from .config import ScenarioConfig
from .errors import ConfigError, IoError, SimError
from .metadata import MetadataSnapshot, idle_metrics
from .platform import Platform, build_platform
from .schedulers import centralized_solve, sidecar_next_hop
from .workload import ReplicaInstance, Request, ServiceChain, ServiceStage, generate_arrivals, place_replicas

CSV_COLUMNS = [
    "request_id",
    "scheduler",
    "rate_rps",
    "seed",
    "submit_s",
    "complete_s",
    "makespan_s",
    "status",
    "sched_delay_s",
    "sum_twl_s",
    "sum_proc_s",
    "sum_sidecar_s",
    "carbon_g",
]

COMPLEXITY_COLUMNS = [
    "chain_length",
    "replica_count",
    "centralized_solve_mean_s",
    "decentralized_hop_mean_s",
    "decentralized_sequence_mean_s",
]

SWEEP_COLUMNS = [
    "scheduler",
    "rate_rps",
    "generated",
    "completed",
    "dropped",
    "makespan_mean_s",
    "makespan_p50_s",
    "makespan_p95_s",
    "makespan_p99_s",
    "makespan_max_s",
    "mean_sched_delay_s",
    "mean_sidecar_total_s",
    "total_carbon_g",
    "total_energy_j",
    "wall_time_s",
]


@dataclass
class RunSummary:
    """Aggregates of one (scenario, scheduler, rate) cell."""

    scheduler: str
    rate_rps: float
    generated: int
    completed: int
    dropped: int
    makespan_mean_s: float
    makespan_p50_s: float
    makespan_p95_s: float
    makespan_p99_s: float
    makespan_max_s: float
    mean_sched_delay_s: float
    mean_sidecar_total_s: float
    total_carbon_g: float
    total_energy_j: float
    wall_time_s: float


def nearest_rank(sorted_values: list[float], q: float) -> float:
    """Nearest-rank quantile: the ceil(q*N)-th smallest value, 1-indexed."""
    if not sorted_values:
        return math.nan
    if not 0 < q <= 1:
        raise ConfigError(f"quantile must be in (0, 1], got {q}")
    k = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[k - 1]


def summarize(
    records: list[engine.ExecutionRecord],
    scheduler: str,
    rate_rps: float,
    total_carbon_g: float,
    total_energy_j: float,
    wall_time_s: float,
) -> RunSummary:
    completed = [r for r in records if r.status == engine.COMPLETED]
    spans = sorted(r.makespan_s for r in completed)
    mean = sum(spans) / len(spans) if spans else math.nan
    sched = [r.sched_delay_s for r in completed]
    sidecar = [sum(r.sidecar_s()) for r in completed]
    return RunSummary(
        scheduler=scheduler,
        rate_rps=rate_rps,
        generated=len(records),
        completed=len(completed),
        dropped=len(records) - len(completed),
        makespan_mean_s=mean,
        makespan_p50_s=nearest_rank(spans, 0.50),
        makespan_p95_s=nearest_rank(spans, 0.95),
        makespan_p99_s=nearest_rank(spans, 0.99),
        makespan_max_s=spans[-1] if spans else math.nan,
        mean_sched_delay_s=sum(sched) / len(sched) if sched else math.nan,
        mean_sidecar_total_s=sum(sidecar) / len(sidecar) if sidecar else math.nan,
        total_carbon_g=total_carbon_g,
        total_energy_j=total_energy_j,
        wall_time_s=wall_time_s,
    )


# -- scenario materialization ------------------------------------------------


def build_chain(cfg: ScenarioConfig) -> ServiceChain:
    w = cfg.workload
    stages = tuple(
        ServiceStage(service_id=sid, work=w.work_flop, payload_out=w.payload_bytes)
        for sid in w.chain_ids()
    )
    return ServiceChain(
        stages=stages,
        latency_budget=w.latency_budget_s,
        request_payload=w.request_payload_bytes,
    )


def build_scenario(
    cfg: ScenarioConfig,
) -> tuple[Platform, list[ReplicaInstance], list[Request], engine.EngineOptions, ServiceChain]:
    """Materialize a validated config into engine inputs. Deterministic per seed."""
    cfg.validate()
    platform = build_platform(cfg.platform)
    chain = build_chain(cfg)
    w = cfg.workload
    seed = w.seed if w.seed is not None else cfg.run.seed
    replicas: list[ReplicaInstance] = []
    for sid in w.service_ids():
        replicas.extend(
            place_replicas(
                platform, sid, w.replicas_per_service, seed, actor_pool=w.actors_per_replica
            )
        )
    host_ids = {h.id for h in platform.hosts}
    origin = w.origin_host if w.origin_host is not None else platform.hosts[0].id
    if origin not in host_ids:
        raise ConfigError(f"workload.origin_host {origin!r} is not a platform host")
    sched_host = cfg.scheduler.scheduler_host
    if sched_host is not None and sched_host not in host_ids:
        raise ConfigError(f"scheduler.scheduler_host {sched_host!r} is not a platform host")
    requests = generate_arrivals(w.rate_rps, w.duration_s, seed, chain, origin)
    options = engine.EngineOptions(
        sidecar_latency_s=cfg.scheduler.sidecar_latency_s,
        sched_overhead_s=cfg.scheduler.sched_overhead_s,
        sched_rtt_s=cfg.scheduler.sched_rtt_s,
        w_lat=cfg.scheduler.w_lat,
        saturate_to_queue=cfg.scheduler.saturate_to_queue,
        metadata_interval_s=cfg.metadata.metadata_interval_s,
        intra_region_delay_s=cfg.metadata.intra_region_delay_s,
        inter_region_delay_s=cfg.metadata.inter_region_delay_s,
        scheduler_host=sched_host,
        duration_s=cfg.run.duration_s if cfg.run.duration_s is not None else w.duration_s,
        shadow_ground_truth=cfg.run.shadow_ground_truth,
    )
    return platform, replicas, requests, options, chain


def execute(cfg: ScenarioConfig) -> tuple[RunSummary, list[dict], engine.SimulationResult]:
    """Run one scenario in memory; returns (summary, CSV rows, raw result)."""
    platform, replicas, requests, options, _ = build_scenario(cfg)
    t0 = time.perf_counter()
    result = engine.run(platform, replicas, requests, cfg.scheduler.kind, options)
    wall = time.perf_counter() - t0
    summary = summarize(
        result.records,
        cfg.scheduler.kind,
        cfg.workload.rate_rps,
        result.total_carbon_g,
        result.total_energy_j,
        wall,
    )
    rows = [
        record_row(rec, cfg.scheduler.kind, cfg.workload.rate_rps, cfg.run.seed)
        for rec in result.records
    ]
    return summary, rows, result


def record_row(rec: engine.ExecutionRecord, scheduler: str, rate_rps: float, seed: int) -> dict:
    done = rec.status == engine.COMPLETED
    return {
        "request_id": rec.request_id,
        "scheduler": scheduler,
        "rate_rps": repr(float(rate_rps)),
        "seed": str(seed),
        "submit_s": repr(rec.submit_s),
        "complete_s": repr(rec.complete_s) if done else "",
        "makespan_s": repr(rec.makespan_s) if done else "",
        "status": rec.status,
        "sched_delay_s": repr(rec.sched_delay_s),
        "sum_twl_s": repr(sum(rec.twl_s())),
        "sum_proc_s": repr(sum(rec.proc_s())),
        "sum_sidecar_s": repr(sum(rec.sidecar_s())),
        "carbon_g": repr(rec.carbon_g()),
    }


# -- file emission -----------------------------------------------------------


def write_csv(rows: list[dict], path: str, columns: list[str] | None = None) -> None:
    """Write rows (dicts of preformatted strings/numbers) atomically to path."""
    cols = columns if columns is not None else CSV_COLUMNS
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_csv(path: str) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def ensure_dir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {path}: {exc}") from exc


def write_json(payload: dict, path: str) -> None:
    try:
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def run_scenario(cfg: ScenarioConfig, out_dir: str | None = None) -> RunSummary:
    """Execute one scenario and emit requests.csv + summary.json in out_dir."""
    out = out_dir if out_dir is not None else cfg.run.out_dir
    summary, rows, _ = execute(cfg)
    ensure_dir(out)
    write_csv(rows, os.path.join(out, "requests.csv"))
    write_json(asdict(summary), os.path.join(out, "summary.json"))
    return summary


# -- rate sweep ---------------------------------------------------------------


def sweep_rates(
    cfg: ScenarioConfig, rates: list[float], out_dir: str | None = None
) -> list[RunSummary]:
    """Run both schedulers at each rate; emit sweep.csv and makespan_vs_rate.png.

    All cells share the same workload seed, so at a given rate the two
    schedulers see the identical arrival stream.
    """
    if not rates:
        raise ConfigError("rates must be non-empty")
    if any(r <= 0 for r in rates):
        raise ConfigError("rates must be > 0")
    if sorted(rates) != list(rates):
        raise ConfigError("rates must be ascending")
    out = out_dir if out_dir is not None else cfg.run.out_dir
    summaries: list[RunSummary] = []
    for kind in (engine.CENTRALIZED, engine.DECENTRALIZED):
        for rate in rates:
            cell = replace(
                cfg,
                scheduler=replace(cfg.scheduler, kind=kind),
                workload=replace(cfg.workload, rate_rps=float(rate)),
            )
            try:
                summary, _, _ = execute(cell)
            except SimError as exc:
                raise type(exc)(f"sweep cell ({kind}, rate={rate}): {exc}") from exc
            summaries.append(summary)
    ensure_dir(out)
    rows = [{c: _fmt(getattr(s, c)) for c in SWEEP_COLUMNS} for s in summaries]
    write_csv(rows, os.path.join(out, "sweep.csv"), SWEEP_COLUMNS)
    _plot_sweep(summaries, os.path.join(out, "makespan_vs_rate.png"))
    return summaries


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _plot_sweep(summaries: list[RunSummary], path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 5))
    for kind, marker in ((engine.CENTRALIZED, "o"), (engine.DECENTRALIZED, "s")):
        cells = [s for s in summaries if s.scheduler == kind]
        ax.plot(
            [s.rate_rps for s in cells],
            [s.makespan_mean_s for s in cells],
            marker=marker,
            label=kind,
        )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("arrival rate (req/s)")
    ax.set_ylabel("mean makespan (s)")
    ax.set_title("Makespan vs. arrival rate")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    try:
        fig.savefig(path, dpi=120, bbox_inches="tight")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)


# -- decision-cost benchmark ---------------------------------------------------


def synthetic_instance(platform: Platform, chain_length: int, replica_count: int):
    """A solver input of the requested shape on an idle desk-scale platform.

    Replicas wrap around the host list, the budget is slack, and every host
    reports idle metrics, so timing measures the policy functions' own cost.
    """
    stages = tuple(
        ServiceStage(service_id=f"b{i:03d}", work=1e9, payload_out=1e6)
        for i in range(chain_length)
    )
    chain = ServiceChain(stages=stages, latency_budget=1e9, request_payload=1e6)
    hosts = platform.hosts
    by_service: dict[str, list[ReplicaInstance]] = {}
    for i, stage in enumerate(stages):
        by_service[stage.service_id] = [
            ReplicaInstance(
                replica_id=f"{stage.service_id}-{k:04d}",
                service_id=stage.service_id,
                host_id=hosts[k % len(hosts)].id,
                actor_pool=24,
            )
            for k in range(replica_count)
        ]
    metrics = {h.id: idle_metrics(h.id) for h in hosts}
    return chain, by_service, metrics


def _timed(fn, reps: int, min_measure_s: float = 2e-3) -> float:
    """Mean per-call wall time within the least-interfered measurement batch.

    Short calls are batched so each measurement spans at least min_measure_s,
    which keeps timer quantization out of microsecond-scale cells. Of the
    reps batch means, the smallest is reported: on a pure CPU-bound workload
    slower batches measure interference (GC pauses, scheduling, cache
    eviction by earlier work), not the cost of fn itself.
    """
    gc.collect()
    fn()  # warm-up
    t0 = time.perf_counter()
    fn()
    once = time.perf_counter() - t0
    number = max(1, math.ceil(min_measure_s / max(once, 1e-9)))
    best = math.inf
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(reps):
            t0 = time.perf_counter()
            for _ in range(number):
                fn()
            best = min(best, (time.perf_counter() - t0) / number)
    finally:
        if gc_was_enabled:
            gc.enable()
    return best


def bench_complexity(
    chain_lengths: list[int],
    replica_counts: list[int],
    reps: int = 5,
    out_dir: str | None = None,
    platform: Platform | None = None,
) -> list[dict]:
    """Time both policies across the (chain length, replica count) grid.

    Emits complexity.csv plus one wall-time surface per policy. Cells run
    strictly sequentially so measurements do not interfere.
    """
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    if not chain_lengths or not replica_counts:
        raise ConfigError("chain_lengths and replica_counts must be non-empty")
    if platform is None:
        from .config import desk_scenario

        platform = build_platform(desk_scenario().platform)
    origin = platform.hosts[0].id
    rows: list[dict] = []
    for n in chain_lengths:
        for rcount in replica_counts:
            chain, by_service, metrics = synthetic_instance(platform, n, rcount)
            snapshot = MetadataSnapshot(observer_id=origin, view=dict(metrics), taken_at=0.0)

            def solve_once():
                centralized_solve(chain, by_service, metrics, platform, origin)

            def hop_sequence():
                here = origin
                for i, stage in enumerate(chain.stages):
                    decision = sidecar_next_hop(
                        i,
                        chain,
                        by_service[stage.service_id],
                        snapshot,
                        platform,
                        here,
                        chain.latency_budget,
                    )
                    here = by_service[stage.service_id][0].host_id if decision is None else (
                        next(
                            r.host_id
                            for r in by_service[stage.service_id]
                            if r.replica_id == decision.replica_id
                        )
                    )

            central_mean = _timed(solve_once, reps)
            seq_mean = _timed(hop_sequence, reps)
            rows.append(
                {
                    "chain_length": n,
                    "replica_count": rcount,
                    "centralized_solve_mean_s": central_mean,
                    "decentralized_hop_mean_s": seq_mean / n,
                    "decentralized_sequence_mean_s": seq_mean,
                }
            )
    if out_dir is not None:
        ensure_dir(out_dir)
        printable = [{k: _fmt(v) for k, v in row.items()} for row in rows]
        write_csv(printable, os.path.join(out_dir, "complexity.csv"), COMPLEXITY_COLUMNS)
        _plot_surface(
            rows,
            "centralized_solve_mean_s",
            "centralized solve wall time (s)",
            os.path.join(out_dir, "centralized_surface.png"),
        )
        _plot_surface(
            rows,
            "decentralized_hop_mean_s",
            "decentralized per-hop wall time (s)",
            os.path.join(out_dir, "decentralized_surface.png"),
        )
    return rows


def hop_slope_ci(rows: list[dict], replica_count: int) -> tuple[float, float, float]:
    """Regress per-hop time on chain length at fixed replica count.

    Returns (slope, ci_low, ci_high) at 95% confidence.
    """
    pts = [
        (row["chain_length"], row["decentralized_hop_mean_s"])
        for row in rows
        if row["replica_count"] == replica_count
    ]
    if len(pts) < 3:
        raise ConfigError(f"need >= 3 chain lengths at replica_count={replica_count}")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    fit = sstats.linregress(xs, ys)
    half = sstats.t.ppf(0.975, len(pts) - 2) * fit.stderr
    return fit.slope, fit.slope - half, fit.slope + half


def _plot_surface(rows: list[dict], column: str, label: str, path: str) -> None:
    ns = sorted({row["chain_length"] for row in rows})
    rs = sorted({row["replica_count"] for row in rows})
    z = np.full((len(ns), len(rs)), np.nan)
    lookup = {(row["chain_length"], row["replica_count"]): row[column] for row in rows}
    for i, n in enumerate(ns):
        for j, r in enumerate(rs):
            z[i, j] = lookup[(n, r)]
    rgrid, ngrid = np.meshgrid(rs, ns)
    fig = plt.figure(figsize=(8, 6))
    ax = fig.add_subplot(projection="3d")
    ax.plot_surface(np.log10(ngrid), np.log10(rgrid), np.log10(z), cmap="viridis")
    ax.set_xlabel("log10 chain length")
    ax.set_ylabel("log10 replica count")
    ax.set_zlabel(f"log10 {label}")
    ax.set_title(label)
    try:
        fig.savefig(path, dpi=120, bbox_inches="tight")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
