"""Aggregation, CSV/JSON emission, rate sweeps, decision-cost grid, CLI."""
from __future__ import annotations

import math
import os
import random
import subprocess
import sys
from dataclasses import replace

import pytest
import yaml

from meshsim.bench import (
    CSV_COLUMNS,
    bench_complexity,
    build_scenario,
    ensure_dir,
    execute,
    hop_slope_ci,
    nearest_rank,
    read_csv,
    record_row,
    run_scenario,
    summarize,
    sweep_rates,
    write_csv,
)
from meshsim.cli import main
from meshsim.config import ScenarioConfig, desk_scenario
from meshsim.engine import CENTRALIZED, COMPLETED, DECENTRALIZED, DROPPED, ExecutionRecord, HopRecord
from meshsim.errors import ConfigError, IoError
from meshsim.platform import PlatformConfig, build_platform


def tiny_cfg(**workload_over) -> ScenarioConfig:
    workload = {
        "services": 2,
        "replicas_per_service": 2,
        "rate_rps": 5.0,
        "duration_s": 1.0,
        "work_flop": 1e8,
    }
    workload.update(workload_over)
    return ScenarioConfig.from_dict(
        {"platform": {"hosts_total": 4, "regions": 2}, "workload": workload}
    )


@pytest.fixture(scope="module")
def tiny_run():
    return execute(tiny_cfg())


# -- quantiles and aggregation ---------------------------------------------------


def test_nearest_rank_examples():
    values = [float(v) for v in range(1, 11)]
    assert nearest_rank(values, 0.50) == 5.0
    assert nearest_rank(values, 0.95) == 10.0
    assert nearest_rank(values, 0.99) == 10.0
    assert nearest_rank(values, 1.0) == 10.0
    assert nearest_rank(values, 0.01) == 1.0
    assert math.isnan(nearest_rank([], 0.5))
    with pytest.raises(ConfigError):
        nearest_rank(values, 0.0)
    with pytest.raises(ConfigError):
        nearest_rank(values, 1.5)


def test_quantiles_are_ordered_on_random_data():
    rng = random.Random(7)
    for _ in range(20):
        values = sorted(rng.uniform(0, 100) for _ in range(rng.randint(1, 50)))
        p50 = nearest_rank(values, 0.50)
        p95 = nearest_rank(values, 0.95)
        p99 = nearest_rank(values, 0.99)
        assert p50 <= p95 <= p99 <= values[-1]


def fake_record(rid: str, status: str, submit: float, complete: float) -> ExecutionRecord:
    hop0 = HopRecord(
        stage=0,
        replica_id="client",
        host_id="h",
        t_queue_in=submit,
        t_sidecar_done=submit + 1e-3,
        carbon_g=0.0,
    )
    return ExecutionRecord(
        request_id=rid,
        status=status,
        hops=[hop0],
        submit_s=submit,
        complete_s=complete if status == COMPLETED else math.nan,
    )


def test_summarize_splits_completed_from_dropped():
    records = [
        fake_record("a", COMPLETED, 0.0, 2.0),
        fake_record("b", COMPLETED, 1.0, 5.0),
        fake_record("c", DROPPED, 2.0, math.nan),
    ]
    s = summarize(records, "decentralized", 5.0, 1.25, 300.0, 0.01)
    assert (s.generated, s.completed, s.dropped) == (3, 2, 1)
    assert s.makespan_mean_s == pytest.approx(3.0)
    assert s.makespan_p50_s == 2.0
    assert s.makespan_p95_s == 4.0
    assert s.makespan_max_s == 4.0
    assert s.mean_sched_delay_s == pytest.approx(1e-3)
    assert s.total_carbon_g == 1.25
    assert s.total_energy_j == 300.0


def test_summarize_all_dropped_yields_nan_stats():
    s = summarize([fake_record("a", DROPPED, 0.0, math.nan)], "x", 1.0, 0.0, 0.0, 0.0)
    assert s.completed == 0 and s.dropped == 1
    assert math.isnan(s.makespan_mean_s) and math.isnan(s.makespan_max_s)


def test_execute_summary_agrees_with_rows(tiny_run):
    summary, rows, result = tiny_run
    assert summary.generated == len(rows) == len(result.records) > 0
    done = [r for r in rows if r["status"] == COMPLETED]
    assert len(done) == summary.completed
    assert summary.dropped == summary.generated - summary.completed
    mean = sum(float(r["makespan_s"]) for r in done) / len(done)
    assert mean == pytest.approx(summary.makespan_mean_s, rel=1e-12)
    for row in rows:
        assert set(row) == set(CSV_COLUMNS)
        if row["status"] != COMPLETED:
            assert row["complete_s"] == "" and row["makespan_s"] == ""


def test_desk_low_rate_completes_every_request():
    summary, _, _ = execute(desk_scenario())
    assert summary.generated > 0
    assert summary.dropped == 0
    assert summary.completed == summary.generated


def test_dropped_record_row_has_blank_completion_fields():
    row = record_row(fake_record("x", DROPPED, 0.5, math.nan), "decentralized", 2.0, 3)
    assert row["complete_s"] == "" and row["makespan_s"] == ""
    assert row["status"] == DROPPED
    assert float(row["sched_delay_s"]) == pytest.approx(1e-3)


# -- file emission ----------------------------------------------------------------


def test_run_scenario_writes_identical_files_per_seed(tmp_path):
    import json

    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    run_scenario(tiny_cfg(), out_a)
    run_scenario(tiny_cfg(), out_b)
    with open(os.path.join(out_a, "requests.csv"), "rb") as fh:
        blob_a = fh.read()
    with open(os.path.join(out_b, "requests.csv"), "rb") as fh:
        blob_b = fh.read()
    assert blob_a == blob_b
    summaries = []
    for out in (out_a, out_b):
        with open(os.path.join(out, "summary.json")) as fh:
            payload = json.load(fh)
        payload.pop("wall_time_s")  # measured wall clock, not simulated time
        summaries.append(payload)
    assert summaries[0] == summaries[1]
    rows = read_csv(os.path.join(out_a, "requests.csv"))
    assert len(rows) > 0 and set(rows[0]) == set(CSV_COLUMNS)


def test_both_schedulers_see_the_same_arrival_stream():
    cfg = tiny_cfg()
    central = replace(cfg, scheduler=replace(cfg.scheduler, kind=CENTRALIZED))
    _, _, req_a, _, _ = build_scenario(cfg)
    _, _, req_b, _, _ = build_scenario(central)
    assert [(r.request_id, r.submit_time) for r in req_a] == [
        (r.request_id, r.submit_time) for r in req_b
    ]


def test_csv_round_trip_and_empty_file(tmp_path):
    path = str(tmp_path / "rows.csv")
    write_csv([], path)
    with open(path) as fh:
        assert fh.read() == ",".join(CSV_COLUMNS) + "\n"
    assert read_csv(path) == []

    row = record_row(fake_record("a", COMPLETED, 0.0, 2.0), "decentralized", 5.0, 0)
    write_csv([row], path)
    assert read_csv(path) == [row]


def test_io_failures_raise_named_errors(tmp_path):
    missing = str(tmp_path / "no" / "such" / "dir" / "x.csv")
    with pytest.raises(IoError, match="x.csv"):
        write_csv([], missing)
    with pytest.raises(IoError, match="absent.csv"):
        read_csv(str(tmp_path / "absent.csv"))
    blocker = tmp_path / "blocker"
    blocker.write_text("file, not a directory\n")
    with pytest.raises(IoError, match="blocker"):
        ensure_dir(str(blocker / "sub"))


def test_build_scenario_rejects_unknown_hosts():
    with pytest.raises(ConfigError, match="origin_host"):
        build_scenario(tiny_cfg(origin_host="ghost"))
    cfg = tiny_cfg()
    cfg = replace(cfg, scheduler=replace(cfg.scheduler, scheduler_host="ghost"))
    with pytest.raises(ConfigError, match="scheduler_host"):
        build_scenario(cfg)


# -- rate sweep ---------------------------------------------------------------------


def test_sweep_grid_order_and_outputs(tmp_path):
    out = str(tmp_path / "sweep")
    summaries = sweep_rates(tiny_cfg(), [2.0, 5.0], out)
    assert [(s.scheduler, s.rate_rps) for s in summaries] == [
        (CENTRALIZED, 2.0),
        (CENTRALIZED, 5.0),
        (DECENTRALIZED, 2.0),
        (DECENTRALIZED, 5.0),
    ]
    assert all(s.completed > 0 for s in summaries)
    rows = read_csv(os.path.join(out, "sweep.csv"))
    assert len(rows) == 4
    assert [row["scheduler"] for row in rows] == [s.scheduler for s in summaries]
    assert os.path.exists(os.path.join(out, "makespan_vs_rate.png"))


def test_sweep_rejects_bad_rate_lists():
    cfg = tiny_cfg()
    with pytest.raises(ConfigError, match="non-empty"):
        sweep_rates(cfg, [])
    with pytest.raises(ConfigError, match="ascending"):
        sweep_rates(cfg, [5.0, 2.0])
    with pytest.raises(ConfigError, match="> 0"):
        sweep_rates(cfg, [0.0, 2.0])


# -- decision-cost grid ----------------------------------------------------------------


def test_complexity_grid_rows_and_files(tmp_path):
    out = str(tmp_path / "bench")
    platform = build_platform(PlatformConfig(hosts_total=4, regions=2))
    rows = bench_complexity([1, 2], [2, 3], reps=1, out_dir=out, platform=platform)
    assert [(r["chain_length"], r["replica_count"]) for r in rows] == [
        (1, 2), (1, 3), (2, 2), (2, 3),
    ]
    for row in rows:
        assert row["centralized_solve_mean_s"] > 0
        assert row["decentralized_sequence_mean_s"] > 0
        assert row["decentralized_hop_mean_s"] == pytest.approx(
            row["decentralized_sequence_mean_s"] / row["chain_length"], rel=1e-12
        )
    assert len(read_csv(os.path.join(out, "complexity.csv"))) == 4
    assert os.path.exists(os.path.join(out, "centralized_surface.png"))
    assert os.path.exists(os.path.join(out, "decentralized_surface.png"))


def test_complexity_grid_validates_inputs():
    with pytest.raises(ConfigError, match="reps"):
        bench_complexity([1], [2], reps=0)
    with pytest.raises(ConfigError, match="non-empty"):
        bench_complexity([], [2])
    with pytest.raises(ConfigError, match="non-empty"):
        bench_complexity([1], [])


def test_hop_slope_confidence_interval():
    rows = [
        {"chain_length": 1, "replica_count": 7, "decentralized_hop_mean_s": 1.0},
        {"chain_length": 2, "replica_count": 7, "decentralized_hop_mean_s": 2.1},
        {"chain_length": 3, "replica_count": 7, "decentralized_hop_mean_s": 2.9},
        {"chain_length": 3, "replica_count": 9, "decentralized_hop_mean_s": 50.0},
    ]
    slope, lo, hi = hop_slope_ci(rows, 7)
    assert slope == pytest.approx(0.95, abs=1e-9)
    assert lo <= 1.0 <= hi
    with pytest.raises(ConfigError, match=">= 3"):
        hop_slope_ci(rows, 9)


# -- command-line interface ---------------------------------------------------------


def write_tiny_yaml(tmp_path) -> str:
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(tiny_cfg().to_dict()))
    return str(path)


def test_cli_run_writes_outputs(tmp_path, capsys):
    out = str(tmp_path / "out")
    assert main(["run", "--config", write_tiny_yaml(tmp_path), "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "requests.csv"))
    assert os.path.exists(os.path.join(out, "summary.json"))
    printed = capsys.readouterr().out
    assert "requests.csv" in printed


def test_cli_sweep_and_bench(tmp_path, capsys):
    out = str(tmp_path / "sweepout")
    code = main(
        ["sweep", "--config", write_tiny_yaml(tmp_path), "--rates", "2,5", "--out", out]
    )
    assert code == 0
    assert os.path.exists(os.path.join(out, "sweep.csv"))

    bench_out = str(tmp_path / "benchout")
    code = main(
        ["bench-complexity", "--chains", "1,2", "--replicas", "2", "--reps", "1", "--out", bench_out]
    )
    assert code == 0
    assert os.path.exists(os.path.join(bench_out, "complexity.csv"))
    capsys.readouterr()


def test_cli_validate_paths(tmp_path, capsys):
    assert main(["validate"]) == 0
    assert "valid" in capsys.readouterr().out
    good = write_tiny_yaml(tmp_path)
    assert main(["validate", "--config", good]) == 0
    capsys.readouterr()


def test_cli_configuration_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("workload:\n  rate_rps: -1\n")
    assert main(["validate", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["sweep", "--rates", "5,2", "--out", str(tmp_path / "x")]) == 2
    assert main(["sweep", "--rates", "a,b", "--out", str(tmp_path / "x")]) == 2
    assert main(["bench-complexity", "--chains", "", "--replicas", "2"]) == 2
    err = capsys.readouterr().err
    assert "configuration error" in err


def test_cli_runtime_io_errors_exit_3(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("occupies the path\n")
    out = str(blocker / "out")
    code = main(["run", "--config", write_tiny_yaml(tmp_path), "--out", out])
    assert code == 3
    assert "run error" in capsys.readouterr().err


def test_cli_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "meshsim.cli", "validate"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0
    assert "valid" in proc.stdout
