"""Batch study pipeline: scenarios, DA clearing, RT rollout, settlement and
report emission for one or both product designs.

Each simulated day draws a fresh scenario ensemble and one realized path
from the configured seed, clears the day-ahead market per design, rolls
real time forward, settles every cashflow and accumulates the comparison
metrics. Everything written to the artifact directory is deterministic for
a fixed seed and backend; the manifest records checksums.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import analysis, settlement
from .benchmark import desk_profiles, resolve_system
from .da_market import (DaPrices, DaProblem, DaSolution, apply_fo_design,
                        apply_ir_design, build_base_uc, compute_prices,
                        solve_da)
from .rt_market import RtResult, run_day, run_simple_rt
from .scenarios import (NoiseConfig, ScenarioSet, TierStructure, account_tiers,
                        build_tiers, compute_constituent_percentiles,
                        compute_net_load_percentiles,
                        generate_synthetic_scenarios, merge_scenario_sets,
                        read_scenarios_csv, to_injection)
from .settlement import CashflowLedger, iso_position
from .solver import BACKEND_ENV_VAR, get_backend
from .system import (MarketConfig, SystemModel, UncertainAccount,
                     validate_system)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONSTITUENT_KEYS = ("load", "wind", "solar")


@dataclass
class StudyConfig:
    system: str = "builtin:small"
    designs: tuple[str, ...] = ("fo", "ir")
    days: int = 1
    seed: int = 1
    scenario_count: int = 200
    oos_scenarios: int = 0
    output_dir: str = "out"
    name: str = "study"
    scenario_csv: str | None = None
    actuals_csv: str | None = None
    load_std: float = 10.0
    wind_std: float = 12.0
    solar_std: float = 2.0
    autocorr: float = 0.7

    def validate(self) -> list[str]:
        problems = []
        if not self.system.startswith("builtin:") and \
                not os.path.exists(self.system):
            problems.append(f"system file {self.system!r} does not exist")
        for path in (self.scenario_csv, self.actuals_csv):
            if path and not os.path.exists(path):
                problems.append(f"scenario file {path!r} does not exist")
        if self.scenario_csv and not self.actuals_csv:
            problems.append("scenario_csv requires actuals_csv")
        if not self.scenario_csv and self.seed is None:
            problems.append("synthetic scenarios require a seed")
        bad = [d for d in self.designs if d not in ("fo", "ir")]
        if bad:
            problems.append(f"unknown designs {bad}")
        if self.days < 0:
            problems.append("days must be >= 0")
        return problems


def load_study(path: str) -> StudyConfig:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    raw = dict(doc.get("study", {}))
    scen = doc.get("scenarios", {})
    raw.setdefault("scenario_count", scen.get("count", 200))
    raw.setdefault("scenario_csv", scen.get("path"))
    for key in ("load_std", "wind_std", "solar_std", "autocorr"):
        if key in scen:
            raw[key] = scen[key]
    if "designs" in raw:
        raw["designs"] = tuple(raw["designs"])
    return StudyConfig(**raw)


@dataclass
class DayInputs:
    """Everything one simulated day needs, fixed before any market clears."""
    scenarios: ScenarioSet
    nl_table: object
    tiers_nl: TierStructure
    tiers_fo: TierStructure
    buyers_fo: list[UncertainAccount]
    buyers_ir: list[UncertainAccount]
    schedules_ir: dict[str, np.ndarray]
    actual_hourly: dict[str, np.ndarray]
    actual_nl_rt: np.ndarray
    realized_injection: dict[str, np.ndarray]


def _day_seed(seed: int, day: int, stream: int) -> int:
    return (seed * 1_000_003 + day * 9_973 + stream * 101) % (2 ** 31 - 1)


def prepare_day(system: SystemModel, cfg: StudyConfig, day: int,
                profiles: dict[str, np.ndarray] | None = None) -> DayInputs:
    """Draw or load the day's ensemble and realized path, then build tiers."""
    mcfg = system.config
    T = mcfg.da_horizon
    actual_hourly: dict[str, np.ndarray] = {}
    if cfg.scenario_csv:
        sset = read_scenarios_csv(cfg.scenario_csv)
        actuals = read_scenarios_csv(cfg.actuals_csv)
        for key in CONSTITUENT_KEYS:
            actual_hourly[key] = actuals.matrix(key)[0, :T]
    else:
        profiles = profiles or desk_profiles(T)
        noise_std = {"load": cfg.load_std, "wind": cfg.wind_std,
                     "solar": cfg.solar_std}
        sets = []
        for i, key in enumerate(CONSTITUENT_KEYS):
            floor = 0.0 if key in ("wind", "solar") else None
            noise = NoiseConfig(std=noise_std[key], autocorr=cfg.autocorr,
                                count=cfg.scenario_count, floor=floor)
            sets.append(generate_synthetic_scenarios(
                profiles[key], noise, _day_seed(cfg.seed, day, i), key=key))
            actual = generate_synthetic_scenarios(
                profiles[key], NoiseConfig(std=noise_std[key],
                                           autocorr=cfg.autocorr, count=1,
                                           floor=floor),
                _day_seed(cfg.seed, day, 10 + i), key=key)
            actual_hourly[key] = actual.matrix(key)[0]
        sset = merge_scenario_sets(sets)
    sset.data["net_load"] = (sset.matrix("load") - sset.matrix("wind")
                             - sset.matrix("solar"))

    pcts = list(mcfg.tier_percentiles)
    tables = {key: compute_constituent_percentiles(sset, pcts, key)
              for key in CONSTITUENT_KEYS}
    nl_table = compute_net_load_percentiles(tables["load"], tables["wind"],
                                            tables["solar"])
    tiers_nl = build_tiers(nl_table, mcfg, account="net_load")

    buyers_ir = list(system.accounts)
    if mcfg.fo_account_mode == "single_aggregate":
        buyers_fo = [UncertainAccount(id="net_load", constituent="aggregate",
                                      scenario_key="net_load")]
        # The aggregate buyer's levels are the composed net-load percentiles
        # in injection orientation, keeping its median consistent with the
        # deterministic forecast the other design clears against.
        tiers_fo = build_tiers(to_injection(nl_table), mcfg,
                               account="net_load")
    else:
        buyers_fo = list(system.accounts)
        tiers_fo = account_tiers(sset, buyers_fo, mcfg)
    tiers_ir_accounts = account_tiers(sset, buyers_ir, mcfg)

    med = pcts.index(50)
    schedules_ir = {acc.id: tiers_ir_accounts.levels[acc.id][:, med].copy()
                    for acc in buyers_ir}

    per_hour = mcfg.rt_per_hour
    rt = {key: np.repeat(actual_hourly[key], per_hour)
          for key in CONSTITUENT_KEYS}
    actual_nl_rt = rt["load"] - rt["wind"] - rt["solar"]
    realized = {"load": -rt["load"], "wind": rt["wind"], "solar": rt["solar"],
                "net_load": -actual_nl_rt}
    return DayInputs(scenarios=sset, nl_table=nl_table, tiers_nl=tiers_nl,
                     tiers_fo=tiers_fo, buyers_fo=buyers_fo,
                     buyers_ir=buyers_ir, schedules_ir=schedules_ir,
                     actual_hourly=actual_hourly, actual_nl_rt=actual_nl_rt,
                     realized_injection=realized)


@dataclass
class DayOutcome:
    design: str
    day: int
    problem: DaProblem
    solution: DaSolution
    prices: DaPrices
    rt: RtResult
    tiers: TierStructure
    entries: list[settlement.Entry]
    report: analysis.CostReport
    nl_schedule: np.ndarray
    cost_curve_points: tuple[np.ndarray, np.ndarray]


def clear_day_ahead(system: SystemModel, design: str, inputs: DayInputs,
                    backend=None) -> tuple[DaProblem, DaSolution, DaPrices]:
    """Build, solve and price the DA market for one design."""
    mcfg = system.config
    prob = build_base_uc(system, inputs.nl_table)
    if design == "ir":
        apply_ir_design(prob, system.reserve_products, inputs.tiers_nl)
    elif design == "fo":
        sellers = [system.seller_params(g.id) for g in system.generators]
        apply_fo_design(prob, sellers, inputs.buyers_fo, inputs.tiers_fo, mcfg)
    else:
        raise ValueError(f"unknown design {design!r}")
    sol = solve_da(prob, mcfg, backend=backend)
    if design == "ir":
        sol.buyer_p = {k: v.copy() for k, v in inputs.schedules_ir.items()}
    prices = compute_prices(prob, sol, backend=backend)
    return prob, sol, prices


def simulate_day(system: SystemModel, design: str, inputs: DayInputs,
                 day: int, backend=None) -> DayOutcome:
    """Full pipeline for one design on one day, through settlement."""
    mcfg = system.config
    backend = backend or get_backend()
    prob, sol, prices = clear_day_ahead(system, design, inputs, backend)

    up = sol.up_awards(system.reserve_products)
    dn = sol.down_awards(system.reserve_products)
    rt = run_day(system, sol, inputs.actual_nl_rt, mcfg, backend=backend,
                 up_awards=up, down_awards=dn)

    realized = inputs.realized_injection
    entries = settlement.settle_da_energy(sol, prices, prob, day)
    entries += settlement.settle_rt_energy(sol, rt, prob, realized, day)
    tiers = inputs.tiers_fo if design == "fo" else inputs.tiers_nl
    if design == "fo":
        entries += settlement.settle_fo_premiums(sol, prices, prob, day)
        _, payoff_entries = settlement.settle_fo_payoffs(
            sol, inputs.tiers_fo, rt, realized, prob, day)
        entries += payoff_entries
    else:
        entries += settlement.settle_ir(sol, prices, realized,
                                        inputs.tiers_nl, prob, day)

    report = analysis.cost_report(design, day, sol, rt)
    nl_schedule = -sum(sol.buyer_p.values()) if sol.buyer_p \
        else inputs.nl_table.at(50.0)[:prob.horizon]
    per_hour = mcfg.rt_per_hour
    err = inputs.actual_nl_rt - np.repeat(nl_schedule, per_hour)
    cost_diff = rt.rtc_production_cost - rt.da_production_cost
    return DayOutcome(design=design, day=day, problem=prob, solution=sol,
                      prices=prices, rt=rt, tiers=tiers, entries=entries,
                      report=report, nl_schedule=np.asarray(nl_schedule),
                      cost_curve_points=(err, cost_diff))


def oos_sweep(system: SystemModel, outcome: DayOutcome, cfg: StudyConfig,
              day: int, backend=None) -> np.ndarray:
    """Out-of-sample balancing costs of one DA solution over a fresh ensemble."""
    mcfg = system.config
    profiles = desk_profiles(mcfg.da_horizon)
    nl_profile = profiles["load"] - profiles["wind"] - profiles["solar"]
    noise = NoiseConfig(
        std=float(np.hypot(np.hypot(cfg.load_std, cfg.wind_std),
                           cfg.solar_std)),
        autocorr=cfg.autocorr, count=cfg.oos_scenarios)
    oos = generate_synthetic_scenarios(
        nl_profile, noise, _day_seed(cfg.seed, day, 77), key="net_load")
    results = run_simple_rt(outcome.solution, oos, system, mcfg,
                            nl_schedule=outcome.nl_schedule, backend=backend)
    return np.array([r.cost for r in results])


# -- artifact emission ---------------------------------------------------------

def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def product_settlement_summary(ledgers: dict[str, CashflowLedger]
                               ) -> list[list]:
    """Product-related settlements per design: DA and RT by side, plus ISO."""
    rows = []
    products = {settlement.PRODUCT_FO_UP, settlement.PRODUCT_FO_DOWN,
                settlement.PRODUCT_IR_UP, settlement.PRODUCT_IR_DOWN}
    gb_classes = (settlement.CLASS_UNCERTAIN, settlement.CLASS_LOAD)
    for design, ledger in sorted(ledgers.items()):
        da_gs = ledger.total(stage="da", product=products,
                             party_class=settlement.CLASS_FLEX)
        da_gb = ledger.total(stage="da", product=products,
                             party_class=gb_classes)
        rt_gs = ledger.total(stage="rt", product=products,
                             party_class=settlement.CLASS_FLEX)
        rt_gb = ledger.total(stage="rt", product=products,
                             party_class=gb_classes)
        iso = ledger.total(product=products,
                           party_class=settlement.CLASS_ISO)
        rows.append([design, _fmt(da_gs), _fmt(da_gb), _fmt(rt_gs),
                     _fmt(rt_gb), _fmt(iso)])
    return rows


def run_study(cfg: StudyConfig) -> str:
    """Run the configured study and return the artifact directory."""
    problems = cfg.validate()
    if problems:
        raise ValueError("; ".join(problems))
    system = resolve_system(cfg.system)
    violations = validate_system(system)
    if violations:
        raise ValueError("invalid system: "
                         + "; ".join(str(v) for v in violations[:5]))
    backend = get_backend()
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)

    ledgers: dict[str, CashflowLedger] = {d: CashflowLedger()
                                          for d in cfg.designs}
    reports: dict[str, list[analysis.CostReport]] = {d: []
                                                     for d in cfg.designs}
    outcomes: dict[tuple[str, int], DayOutcome] = {}
    curve_points: dict[str, list] = {d: [] for d in cfg.designs}
    oos_costs: dict[str, list[np.ndarray]] = {d: [] for d in cfg.designs}

    for day in range(cfg.days):
        inputs = prepare_day(system, cfg, day)
        for design in cfg.designs:
            outcome = simulate_day(system, design, inputs, day, backend)
            outcomes[(design, day)] = outcome
            ledgers[design].extend(outcome.entries)
            reports[design].append(outcome.report)
            curve_points[design].append(outcome.cost_curve_points)
            if cfg.oos_scenarios > 0:
                oos_costs[design].append(
                    oos_sweep(system, outcome, cfg, day, backend))

    files = []

    all_reports = [r for d in cfg.designs for r in reports[d]]
    analysis.write_cost_report_csv(all_reports,
                                   os.path.join(outdir, "cost_report.csv"))
    files.append("cost_report.csv")

    for design in cfg.designs:
        ledger = ledgers[design]
        name = f"ledger_{design}.csv"
        ledger.write_csv(os.path.join(outdir, name))
        files.append(name)
        pos = iso_position(ledger)
        rows = [[f"{stage}/{product}", _fmt(amount)]
                for (stage, product), amount in sorted(pos.net.items())]
        rows.append(["total", _fmt(pos.total)])
        if pos.ir_recovery_ratio is not None:
            rows.append(["ir_recovery_ratio", _fmt(pos.ir_recovery_ratio)])
        name = f"iso_position_{design}.csv"
        _write_csv(os.path.join(outdir, name), ["item", "amount"], rows)
        files.append(name)

        rt_costs = {day: float(sum(
            outcomes[(design, day)].rt.unit_incremental_cost[g.id].sum()
            for g in system.generators)) for day in range(cfg.days)}
        flex = settlement.aggregate_cashflows(
            ledger, settlement.CLASS_FLEX, rt_costs)
        name = f"cashflow_flex_{design}.csv"
        flex.write_csv(os.path.join(outdir, name))
        files.append(name)
        unc = settlement.aggregate_cashflows(
            ledger, {settlement.CLASS_UNCERTAIN, settlement.CLASS_LOAD})
        name = f"cashflow_uncertain_{design}.csv"
        unc.write_csv(os.path.join(outdir, name))
        files.append(name)

        if cfg.days:
            rows = []
            for day in range(cfg.days):
                out = outcomes[(design, day)]
                demand = analysis.flexibility_demand_metric(out.solution,
                                                            out.tiers)
                pct, clamped = analysis.da_schedule_percentile(
                    out.solution, out.problem.nl_forecast, out.nl_schedule)
                for t in range(len(pct)):
                    rows.append([day, t, _fmt(demand.up[t]),
                                 _fmt(demand.down[t]),
                                 "" if np.isnan(demand.normalized[t])
                                 else _fmt(demand.normalized[t]),
                                 _fmt(pct[t]), int(clamped[t])])
            name = f"flexibility_{design}.csv"
            _write_csv(os.path.join(outdir, name),
                       ["day", "hour", "demand_up", "demand_down",
                        "normalized", "schedule_percentile", "clamped"], rows)
            files.append(name)

        if cfg.oos_scenarios > 0:
            rows = []
            for day, costs in enumerate(oos_costs[design]):
                for s, c in enumerate(costs):
                    rows.append([day, s, _fmt(c)])
            name = f"oos_costs_{design}.csv"
            _write_csv(os.path.join(outdir, name),
                       ["day", "scenario", "cost"], rows)
            files.append(name)

        points = curve_points[design]
        if points:
            err = np.concatenate([p[0] for p in points])
            diff = np.concatenate([p[1] for p in points])
            try:
                pos_fit, neg_fit = analysis.rt_cost_curves(err, diff)
                rows = [[design, f.direction, _fmt(f.slope), _fmt(f.intercept),
                         _fmt(f.r2), f.count] for f in (pos_fit, neg_fit)]
            except ValueError:
                rows = []
            name = f"cost_curves_{design}.csv"
            _write_csv(os.path.join(outdir, name),
                       ["design", "direction", "slope", "intercept", "r2",
                        "count"], rows)
            files.append(name)

    name = "product_settlements.csv"
    _write_csv(os.path.join(outdir, name),
               ["design", "da_gs", "da_gb", "rt_gs", "rt_gb", "iso"],
               product_settlement_summary(ledgers))
    files.append(name)

    if set(cfg.designs) >= {"fo", "ir"} and cfg.days:
        diff_rows = analysis.weekly_cost_diff(
            reports, mip_gap=system.config.mip_gap)
        analysis.write_weekly_diff_csv(
            diff_rows, os.path.join(outdir, "weekly_cost_diff.csv"))
        files.append("weekly_cost_diff.csv")
        rows = []
        for day in range(cfg.days):
            diff = analysis.committed_unit_diff(
                outcomes[("fo", day)].solution, outcomes[("ir", day)].solution,
                system)
            rows.extend([[day, t, int(d)] for t, d in enumerate(diff)])
        _write_csv(os.path.join(outdir, "committed_unit_diff.csv"),
                   ["day", "hour", "fo_minus_ir"], rows)
        files.append("committed_unit_diff.csv")

    manifest = {
        "name": cfg.name,
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(cfg).items()},
        "backend": os.environ.get(BACKEND_ENV_VAR, "highs"),
        "defaulted_reserve_prices": [p.name for p in system.reserve_products
                                     if p.defaulted_prices],
        "files": {},
    }
    for name in sorted(files):
        with open(os.path.join(outdir, name), "rb") as fh:
            manifest["files"][name] = hashlib.sha256(fh.read()).hexdigest()
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return outdir


def compare(dir_a: str, dir_b: str, outdir: str) -> list[str]:
    """Numeric deltas (b minus a) between two artifact directories."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    required = ["cost_report.csv", "product_settlements.csv"]
    optional = ["committed_unit_diff.csv", "weekly_cost_diff.csv"]
    for name in required + optional:
        path_a = os.path.join(dir_a, name)
        path_b = os.path.join(dir_b, name)
        have_a, have_b = os.path.exists(path_a), os.path.exists(path_b)
        if not have_a and not have_b:
            if name in required:
                raise FileNotFoundError(f"missing artifact {path_a}")
            continue
        if have_a != have_b:
            missing = path_a if not have_a else path_b
            raise FileNotFoundError(f"missing artifact {missing}")
        with open(path_a, newline="") as fh:
            rows_a = list(csv.reader(fh))
        with open(path_b, newline="") as fh:
            rows_b = list(csv.reader(fh))
        if not rows_a or not rows_b or rows_a[0] != rows_b[0]:
            raise ValueError(f"schema mismatch in {name}")
        header = rows_a[0]
        out_rows = []
        for ra, rb in zip(rows_a[1:], rows_b[1:]):
            row = []
            for ca, cb in zip(ra, rb):
                try:
                    row.append(_fmt(float(cb) - float(ca)))
                except ValueError:
                    row.append(cb if cb == ca else f"{ca}->{cb}")
            out_rows.append(row)
        out_name = f"delta_{name}"
        _write_csv(os.path.join(outdir, out_name), header, out_rows)
        written.append(out_name)
    return written
