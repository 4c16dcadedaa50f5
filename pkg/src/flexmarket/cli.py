"""Batch front door: run studies, compare artifact directories, sweep
out-of-sample scenarios and emit forecast diagnostics.

Exit codes: 0 success, 1 input or configuration error, 2 solve failure.
The solver backend is chosen with the FLEXMARKET_SOLVER environment
variable (default: highs).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .benchmark import desk_profiles, resolve_system
from .scenarios import (NoiseConfig, forecast_diagnostics,
                        generate_synthetic_scenarios, read_scenarios_csv)
from .solver import InfeasibleError, SolveError
from .study import StudyConfig, compare, load_study, run_study

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVE = 2


def _cmd_run(args) -> int:
    if args.config:
        cfg = load_study(args.config)
    else:
        cfg = StudyConfig()
    if args.output:
        cfg.output_dir = args.output
    if args.days is not None:
        cfg.days = args.days
    if args.seed is not None:
        cfg.seed = args.seed
    if args.designs:
        cfg.designs = tuple(args.designs.split(","))
    if args.system:
        cfg.system = args.system
    outdir = run_study(cfg)
    print(f"study complete; artifacts in {outdir}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    written = compare(args.dir_a, args.dir_b, args.output)
    for name in written:
        print(os.path.join(args.output, name))
    return EXIT_OK


def _cmd_oos(args) -> int:
    cfg = load_study(args.config) if args.config else StudyConfig()
    if args.output:
        cfg.output_dir = args.output
    if args.scenarios is not None:
        cfg.oos_scenarios = args.scenarios
    if cfg.oos_scenarios <= 0:
        cfg.oos_scenarios = 200
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.days = max(cfg.days, 1)
    outdir = run_study(cfg)
    print(f"out-of-sample sweep complete; artifacts in {outdir}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    if args.scenarios:
        sset = read_scenarios_csv(args.scenarios)
        key = args.key
        with open(args.actuals, newline="") as fh:
            actuals = np.array([float(row[args.actuals_column])
                                for row in csv.DictReader(fh)])
    else:
        profiles = desk_profiles()
        nl = profiles["load"] - profiles["wind"] - profiles["solar"]
        sset = generate_synthetic_scenarios(
            nl, NoiseConfig(std=30.0, autocorr=0.7, count=500),
            args.seed or 1, key="net_load")
        actual = generate_synthetic_scenarios(
            nl, NoiseConfig(std=30.0, autocorr=0.7, count=1),
            (args.seed or 1) + 7, key="net_load")
        actuals = actual.matrix("net_load")[0]
        key = "net_load"
    diag = forecast_diagnostics(sset, actuals, key)
    os.makedirs(args.output, exist_ok=True)
    path = os.path.join(args.output, "forecast_diagnostics.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["nominal_percentile", "observed_rank"])
        for nominal, observed in diag.rank_curve:
            writer.writerow([f"{nominal:g}", f"{observed:.3f}"])
        writer.writerow([])
        writer.writerow(["metric", "value"])
        writer.writerow(["error_mean_mw", f"{diag.error_mean:.4f}"])
        writer.writerow(["error_min_mw", f"{diag.error_min:.4f}"])
        writer.writerow(["error_max_mw", f"{diag.error_max:.4f}"])
        writer.writerow(["error_mean_pct", f"{diag.error_mean_pct:.4f}"])
        writer.writerow(["error_min_pct", f"{diag.error_min_pct:.4f}"])
        writer.writerow(["error_max_pct", f"{diag.error_max_pct:.4f}"])
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flexmarket",
        description="Two-settlement market simulation with flexibility "
                    "options and imbalance reserves")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a full study")
    p_run.add_argument("--config", help="study TOML file")
    p_run.add_argument("--output", help="artifact directory override")
    p_run.add_argument("--days", type=int, help="number of simulated days")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--designs", help="comma-separated: fo,ir")
    p_run.add_argument("--system", help="system TOML path or builtin:<name>")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="diff two artifact directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.add_argument("--output", default="compare_out")
    p_cmp.set_defaults(func=_cmd_compare)

    p_oos = sub.add_parser("oos", help="out-of-sample scenario sweep")
    p_oos.add_argument("--config")
    p_oos.add_argument("--output")
    p_oos.add_argument("--scenarios", type=int)
    p_oos.add_argument("--seed", type=int)
    p_oos.set_defaults(func=_cmd_oos)

    p_diag = sub.add_parser("diagnose", help="forecast-quality diagnostics")
    p_diag.add_argument("--scenarios", help="scenario CSV; synthetic if omitted")
    p_diag.add_argument("--actuals", help="actuals CSV")
    p_diag.add_argument("--actuals-column", default="mw")
    p_diag.add_argument("--key", default="net_load")
    p_diag.add_argument("--seed", type=int)
    p_diag.add_argument("--output", default="diagnostics_out")
    p_diag.set_defaults(func=_cmd_diagnose)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolveError, InfeasibleError, RuntimeError) as exc:
        print(f"solve failure: {exc}", file=sys.stderr)
        return EXIT_SOLVE


if __name__ == "__main__":
    sys.exit(main())
