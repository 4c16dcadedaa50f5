"""Comparative metrics: cost decomposition, RT cost curves, flexibility
demand, schedule percentiles and design-vs-design deltas."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .da_market import DaSolution
from .rt_market import RtResult
from .scenarios import PercentileTable, TierStructure
from .system import SystemModel

DA_COST_TAGS = ("dispatch", "no_load", "startup", "unserved_penalty")


@dataclass
class CostReport:
    """System cost decomposition for one design on one simulated stretch."""
    design: str
    week: int
    da_cost: float
    rtd_cost: float
    rtd_scarcity: float

    @property
    def total(self) -> float:
        return self.da_cost + self.rtd_cost + self.rtd_scarcity


def cost_report(design: str, week: int, sol: DaSolution,
                rt: RtResult | None = None,
                rt_cost: float | None = None,
                rt_scarcity: float | None = None) -> CostReport:
    da_cost = sum(sol.cost_terms.get(tag, 0.0) for tag in DA_COST_TAGS)
    if rt is not None:
        rt_cost = rt.rtd_incremental_cost
        rt_scarcity = rt.total_scarcity_cost
    return CostReport(design, week, da_cost, rt_cost or 0.0, rt_scarcity or 0.0)


@dataclass
class CostCurveFit:
    direction: str            # "positive" | "negative"
    slope: float              # $ per MW of error
    intercept: float
    r2: float
    count: int


def _ols(x: np.ndarray, y: np.ndarray, direction: str) -> CostCurveFit:
    if len(x) < 2:
        raise ValueError(f"need at least 2 {direction}-error points")
    if np.ptp(x) < 1e-12:
        raise ValueError(f"degenerate regressor: {direction}-error values "
                         "are constant")
    A = np.column_stack([x, np.ones_like(x)])
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) @ (y - y.mean())))
    r2 = 1.0 if ss_tot < 1e-12 else 1.0 - ss_res / ss_tot
    return CostCurveFit(direction, float(coef[0]), float(coef[1]), r2, len(x))


def rt_cost_curves(errors: np.ndarray, cost_diffs: np.ndarray
                   ) -> tuple[CostCurveFit, CostCurveFit]:
    """Fit the RT cost response to net-load error, one line per direction."""
    errors = np.asarray(errors, dtype=float)
    cost_diffs = np.asarray(cost_diffs, dtype=float)
    pos = errors > 0
    neg = errors < 0
    return (_ols(errors[pos], cost_diffs[pos], "positive"),
            _ols(errors[neg], cost_diffs[neg], "negative"))


@dataclass
class FlexibilityDemand:
    up: np.ndarray
    down: np.ndarray
    normalized: np.ndarray    # (up + down) / [5,95] width, NaN when undefined


def flexibility_demand_metric(sol: DaSolution, tiers: TierStructure,
                              products=None) -> FlexibilityDemand:
    """Procured flexibility per hour, normalized by the prediction width.

    Options count the traded volumes (self-hedges are not procured);
    reserves count the awards.
    """
    directions = {p.name: p.direction for p in products} if products else {}

    def direction(name: str) -> str:
        return directions.get(name, "up" if name.endswith("up") else "down")

    some_levels = next(iter(tiers.levels.values()))
    T = some_levels.shape[0]
    up = np.zeros(T)
    down = np.zeros(T)
    for mat in sol.hd_up.values():
        up += mat.sum(axis=0)[:T]
    for mat in sol.hd_dn.values():
        down += mat.sum(axis=0)[:T]
    for (gid, product), arr in sol.reserve_on.items():
        if direction(product) == "up":
            up += arr[:T]
        else:
            down += arr[:T]
    for (gid, product), arr in sol.reserve_off.items():
        if direction(product) == "up":
            up += arr[:T]
    width = np.zeros(T)
    for levels in tiers.levels.values():
        width += levels[:, -1] - levels[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = np.where(width > 1e-9, (up + down) / width, np.nan)
    return FlexibilityDemand(up, down, normalized)


def da_schedule_percentile(sol: DaSolution, nl: PercentileTable,
                           nl_schedule: np.ndarray | None = None
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Percentile of the scheduled net load inside the forecast distribution.

    Linear interpolation between tabulated percentiles; schedules outside the
    table clamp to its ends and are flagged.
    """
    if nl_schedule is None:
        if not sol.buyer_p:
            raise ValueError("need nl_schedule for solutions without buyers")
        nl_schedule = -sum(sol.buyer_p.values())
    T = len(nl_schedule)
    pcts = np.array(nl.percentiles)
    out = np.zeros(T)
    clamped = np.zeros(T, dtype=bool)
    for t in range(T):
        row = nl.values[t]
        x = nl_schedule[t]
        if x <= row[0]:
            out[t] = pcts[0]
            clamped[t] = x < row[0] - 1e-9
        elif x >= row[-1]:
            out[t] = pcts[-1]
            clamped[t] = x > row[-1] + 1e-9
        else:
            out[t] = float(np.interp(x, row, pcts))
    return out, clamped


@dataclass
class WeeklyCostDiff:
    week: int
    ir_total: float
    fo_total: float
    diff: float               # IR minus FO
    band: float               # +/- MIP-gap band around zero
    weight: float


def weekly_cost_diff(reports: dict[str, list[CostReport]],
                     weights: np.ndarray | None = None,
                     mip_gap: float = 0.005) -> list[WeeklyCostDiff]:
    """Per-week IR-minus-FO expected cost with the MIP-gap significance band.

    Weights (cluster sizes) scale each characteristic week up to the year;
    the returned list ends with the annualized row (week = -1).
    """
    fo = {r.week: r for r in reports["fo"]}
    ir = {r.week: r for r in reports["ir"]}
    if set(fo) != set(ir):
        raise ValueError("designs were simulated on different weeks")
    weeks = sorted(fo)
    if weights is None:
        weights = np.ones(len(weeks))
    if len(weights) != len(weeks):
        raise ValueError("one weight per week required")
    out = []
    for w, wt in zip(weeks, weights):
        band = mip_gap * max(fo[w].da_cost, ir[w].da_cost)
        out.append(WeeklyCostDiff(w, ir[w].total, fo[w].total,
                                  ir[w].total - fo[w].total, band, float(wt)))
    annual_ir = sum(r.ir_total * r.weight for r in out)
    annual_fo = sum(r.fo_total * r.weight for r in out)
    annual_band = sum(r.band * r.weight for r in out)
    out.append(WeeklyCostDiff(-1, annual_ir, annual_fo,
                              annual_ir - annual_fo, annual_band,
                              float(sum(weights))))
    return out


def committed_unit_diff(da_fo: DaSolution, da_ir: DaSolution,
                        system: SystemModel) -> np.ndarray:
    """Per-hour difference in committed DA-only unit counts (FO minus IR)."""
    T = len(next(iter(da_fo.commit.values())))
    diff = np.zeros(T, dtype=int)
    for g in system.da_only_units():
        diff += da_fo.commit[g.id] - da_ir.commit[g.id]
    return diff


def write_cost_report_csv(reports: list[CostReport], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["design", "week", "da_cost", "rtd_cost",
                         "rtd_scarcity", "system_cost"])
        for r in reports:
            writer.writerow([r.design, r.week, f"{r.da_cost:.6f}",
                             f"{r.rtd_cost:.6f}", f"{r.rtd_scarcity:.6f}",
                             f"{r.total:.6f}"])


def write_weekly_diff_csv(rows: list[WeeklyCostDiff], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["week", "ir_total", "fo_total", "ir_minus_fo",
                         "band", "weight"])
        for r in rows:
            writer.writerow([r.week, f"{r.ir_total:.6f}", f"{r.fo_total:.6f}",
                             f"{r.diff:.6f}", f"{r.band:.6f}", r.weight])
