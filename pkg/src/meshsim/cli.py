"""Command-line interface: run, sweep, bench-complexity, validate.

Exit codes: 0 on success, 2 on configuration errors, 3 on runtime errors.
Without --config, run/sweep/validate use the built-in desk-scale scenario.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace

from .bench import bench_complexity, run_scenario, sweep_rates
from .config import ScenarioConfig, desk_scenario
from .errors import ConfigError, SimError


def _load_config(args: argparse.Namespace) -> ScenarioConfig:
    cfg = ScenarioConfig.from_yaml(args.config) if args.config else desk_scenario()
    run = cfg.run
    if getattr(args, "seed", None) is not None:
        run = replace(run, seed=args.seed)
    if getattr(args, "out", None) is not None:
        run = replace(run, out_dir=args.out)
    cfg = replace(cfg, run=run)
    cfg.validate()
    return cfg


def _parse_number_list(text: str, kind: type, flag: str) -> list:
    try:
        values = [kind(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError(f"{flag} expects a comma-separated list, got {text!r}") from None
    if not values:
        raise ConfigError(f"{flag} expects at least one value")
    return values


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    summary = run_scenario(cfg)
    print(json.dumps(asdict(summary), indent=2, sort_keys=True))
    print(f"wrote {cfg.run.out_dir}/requests.csv and {cfg.run.out_dir}/summary.json")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    rates = _parse_number_list(args.rates, float, "--rates")
    summaries = sweep_rates(cfg, rates)
    for s in summaries:
        print(
            f"{s.scheduler:>13} rate={s.rate_rps:<8g} completed={s.completed:<7d} "
            f"dropped={s.dropped:<7d} mean_makespan_s={s.makespan_mean_s:.6g}"
        )
    print(f"wrote {cfg.run.out_dir}/sweep.csv and {cfg.run.out_dir}/makespan_vs_rate.png")
    return 0


def cmd_bench_complexity(args: argparse.Namespace) -> int:
    chains = _parse_number_list(args.chains, int, "--chains")
    replicas = _parse_number_list(args.replicas, int, "--replicas")
    rows = bench_complexity(chains, replicas, reps=args.reps, out_dir=args.out)
    for row in rows:
        print(
            f"n={row['chain_length']:<4d} R={row['replica_count']:<5d} "
            f"centralized={row['centralized_solve_mean_s']:.6g}s "
            f"per_hop={row['decentralized_hop_mean_s']:.6g}s"
        )
    print(f"wrote {args.out}/complexity.csv and two surface plots")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = ScenarioConfig.from_yaml(args.config) if args.config else desk_scenario()
    cfg.validate()
    print("configuration is valid")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshsim",
        description="Discrete-event simulator comparing centralized and sidecar scheduling of service chains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario, emit per-request CSV + summary")
    p_run.add_argument("--config", help="scenario YAML file (default: built-in desk scenario)")
    p_run.add_argument("--seed", type=int, help="override run.seed")
    p_run.add_argument("--out", help="override run.out_dir")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep arrival rates for both schedulers")
    p_sweep.add_argument("--config", help="scenario YAML file (default: built-in desk scenario)")
    p_sweep.add_argument("--rates", required=True, help="comma-separated req/s values, ascending")
    p_sweep.add_argument("--seed", type=int, help="override run.seed")
    p_sweep.add_argument("--out", help="override run.out_dir")
    p_sweep.set_defaults(func=cmd_sweep)

    p_bench = sub.add_parser(
        "bench-complexity", help="time both policies across a (chain length, replicas) grid"
    )
    p_bench.add_argument("--chains", required=True, help="comma-separated chain lengths")
    p_bench.add_argument("--replicas", required=True, help="comma-separated replica counts")
    p_bench.add_argument("--reps", type=int, default=5, help="timing repetitions per cell")
    p_bench.add_argument("--out", default="out", help="output directory")
    p_bench.set_defaults(func=cmd_bench_complexity)

    p_val = sub.add_parser("validate", help="validate a scenario file and exit")
    p_val.add_argument("--config", help="scenario YAML file (default: built-in desk scenario)")
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SimError as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
