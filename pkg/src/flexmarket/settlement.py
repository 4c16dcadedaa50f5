"""Cashflows of both product designs and the operator's position.

Every settlement function emits double-entry ledger rows: participant
entries plus one ISO row per (stage, product, interval) that absorbs the
group residual, so the full ledger sums to zero by construction and any
leakage shows up in the ISO position rather than vanishing.

Sign convention: positive amounts are received by the party.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .da_market import DaPrices, DaProblem, DaSolution
from .rt_market import RtResult
from .scenarios import TierStructure
from .system import MarketConfig, SystemModel

STAGE_DA = "da"
STAGE_RT = "rt"

PRODUCT_ENERGY = "energy"
PRODUCT_FO_UP = "fo_up"
PRODUCT_FO_DOWN = "fo_down"
PRODUCT_IR_UP = "ir_up"
PRODUCT_IR_DOWN = "ir_down"

CLASS_FLEX = "flex_supplier"
CLASS_UNCERTAIN = "uncertain_resource"
CLASS_LOAD = "load"
CLASS_ISO = "iso"
CLASS_SCARCITY = "scarcity"


class AuditError(RuntimeError):
    """The ledger violates double-entry conservation."""


@dataclass(frozen=True)
class Entry:
    party: str
    party_class: str
    stage: str
    product: str
    day: int
    interval: int
    amount: float


@dataclass
class CashflowLedger:
    entries: list[Entry] = field(default_factory=list)

    def add(self, *args, **kwargs) -> None:
        self.entries.append(Entry(*args, **kwargs))

    def extend(self, entries: list[Entry]) -> None:
        self.entries.extend(entries)

    def total(self, **filters) -> float:
        return sum(e.amount for e in self.select(**filters))

    def select(self, **filters) -> list[Entry]:
        out = self.entries
        for name, value in filters.items():
            if isinstance(value, (set, frozenset, list, tuple)):
                out = [e for e in out if getattr(e, name) in value]
            else:
                out = [e for e in out if getattr(e, name) == value]
        return out

    def days(self) -> list[int]:
        return sorted({e.day for e in self.entries})

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["party", "class", "stage", "product", "day",
                             "interval", "amount"])
            for e in self.entries:
                writer.writerow([e.party, e.party_class, e.stage, e.product,
                                 e.day, e.interval, f"{e.amount:.9f}"])


@dataclass
class IsoPosition:
    """Operator net by product and stage, derived purely from the ledger."""
    net: dict[tuple[str, str], float]
    total: float
    ir_recovery_ratio: float | None = None

    def stage_product(self, stage: str, product: str) -> float:
        return self.net.get((stage, product), 0.0)


@dataclass
class ExerciseRecord:
    buyer: str
    tier: int
    day: int
    interval: int
    price_trigger: bool
    quantity_trigger: bool
    exercised_mw: float
    payoff_per_mw: float
    flagged_unhedged: bool = False


def _iso_balance(entries: list[Entry]) -> list[Entry]:
    """One ISO counter-entry per (stage, product, day, interval) group."""
    groups: dict[tuple, float] = defaultdict(float)
    for e in entries:
        groups[(e.stage, e.product, e.day, e.interval)] += e.amount
    out = list(entries)
    for (stage, product, day, interval), amount in sorted(groups.items()):
        out.append(Entry("iso", CLASS_ISO, stage, product, day, interval,
                         -amount))
    return out


def _account_class(system: SystemModel, account_id: str) -> str:
    for acc in system.accounts:
        if acc.id == account_id:
            return CLASS_LOAD if acc.constituent == "load" else CLASS_UNCERTAIN
    return CLASS_UNCERTAIN


def _balance_rhs(problem: DaProblem) -> np.ndarray:
    return np.array([problem.lin.constraints[row].lb
                     for row in problem.balance_rows])


def _residual_demand(problem: DaProblem, sol: DaSolution) -> np.ndarray:
    """Fixed consumption not represented by any uncertain account."""
    rhs = _balance_rhs(problem)
    if problem.fo_active:
        return rhs
    sched = sum(sol.buyer_p.values()) if sol.buyer_p else 0.0
    return rhs + sched


def settle_da_energy(sol: DaSolution, prices: DaPrices, problem: DaProblem,
                     day: int = 0) -> list[Entry]:
    """Uniform-price DA energy settlement of every scheduled injection."""
    system = problem.system
    lam = prices.lam_da
    dt = system.config.da_resolution
    residual = _residual_demand(problem, sol)
    entries: list[Entry] = []
    T = problem.horizon
    for g in system.generators:
        sched = sol.gen_p[g.id] * sol.commit[g.id]
        for t in range(T):
            if sched[t]:
                entries.append(Entry(g.id, CLASS_FLEX, STAGE_DA,
                                     PRODUCT_ENERGY, day, t,
                                     lam[t] * sched[t] * dt))
    for bid, sched in sol.buyer_p.items():
        cls = _account_class(system, bid)
        for t in range(T):
            if sched[t]:
                entries.append(Entry(bid, cls, STAGE_DA, PRODUCT_ENERGY, day,
                                     t, lam[t] * sched[t] * dt))
    for t in range(T):
        slack = sol.shed[t] - sol.over[t]
        if slack:
            entries.append(Entry("da_scarcity", CLASS_SCARCITY, STAGE_DA,
                                 PRODUCT_ENERGY, day, t, lam[t] * slack * dt))
        if residual[t]:
            entries.append(Entry("fixed_demand", CLASS_LOAD, STAGE_DA,
                                 PRODUCT_ENERGY, day, t,
                                 -lam[t] * residual[t] * dt))
    return _iso_balance(entries)


def settle_fo_premiums(sol: DaSolution, prices: DaPrices,
                       problem: DaProblem, day: int = 0) -> list[Entry]:
    """DA option premiums: sellers paid, buyers charged, tier by tier.

    Self-hedged volumes carry no cash; they are internal to the buyer.
    """
    if prices.fo_up is None:
        return []
    system = problem.system
    entries: list[Entry] = []
    T = problem.horizon
    R = problem.tiers.num_tiers
    for direction, product, price, hs, hd in (
            ("up", PRODUCT_FO_UP, prices.fo_up, sol.hs_up, sol.hd_up),
            ("down", PRODUCT_FO_DOWN, prices.fo_dn, sol.hs_dn, sol.hd_dn)):
        for gid, mat in hs.items():
            for t in range(T):
                amount = float(sum(price[r, t] * mat[r, t] for r in range(R)))
                if amount:
                    entries.append(Entry(gid, CLASS_FLEX, STAGE_DA, product,
                                         day, t, amount))
        for bid, mat in hd.items():
            cls = _account_class(system, bid)
            for t in range(T):
                amount = float(sum(price[r, t] * mat[r, t] for r in range(R)))
                if amount:
                    entries.append(Entry(bid, cls, STAGE_DA, product, day, t,
                                         -amount))
    return _iso_balance(entries)


def settle_rt_energy(sol: DaSolution, rt: RtResult, problem: DaProblem,
                     realized_injection: dict[str, np.ndarray],
                     day: int = 0) -> list[Entry]:
    """Deviations from DA schedules settle at the RT price."""
    system = problem.system
    cfg = system.config
    dt = cfg.rt_resolution
    per_hour = cfg.rt_per_hour
    Q = len(rt.price)
    entries: list[Entry] = []
    for g in system.generators:
        for q in range(Q):
            h = q // per_hour
            ref = float(sol.gen_p[g.id][h] * sol.commit[g.id][h])
            dev = rt.dispatch[g.id][q] - ref
            if abs(dev) > 1e-12:
                entries.append(Entry(g.id, CLASS_FLEX, STAGE_RT,
                                     PRODUCT_ENERGY, day, q,
                                     rt.price[q] * dev * dt))
    for bid, sched in sol.buyer_p.items():
        cls = _account_class(system, bid)
        realized = realized_injection[bid]
        for q in range(Q):
            dev = realized[q] - sched[q // per_hour]
            if abs(dev) > 1e-12:
                entries.append(Entry(bid, cls, STAGE_RT, PRODUCT_ENERGY, day,
                                     q, rt.price[q] * dev * dt))
    for q in range(Q):
        h = q // per_hour
        slack = (rt.shed[q] - rt.over[q]) - (sol.shed[h] - sol.over[h])
        if abs(slack) > 1e-12:
            entries.append(Entry("rt_scarcity", CLASS_SCARCITY, STAGE_RT,
                                 PRODUCT_ENERGY, day, q,
                                 rt.price[q] * slack * dt))
    return _iso_balance(entries)


def settle_fo_payoffs(sol: DaSolution, tiers: TierStructure, rt: RtResult,
                      realized_injection: dict[str, np.ndarray],
                      problem: DaProblem, day: int = 0
                      ) -> tuple[list[ExerciseRecord], list[Entry]]:
    """Dual-trigger option payoffs from sellers to buyers.

    A tier pays only when the realized output crosses it (quantity trigger)
    and the RT price clears the matched seller's strike (price trigger).
    Shortfalls fill tiers from the schedule outward; matching is pro-rata by
    tier sales. Output beyond the outermost levels is unhedged and flagged.
    """
    system = problem.system
    cfg = system.config
    dt = cfg.rt_resolution
    per_hour = cfg.rt_per_hour
    R = tiers.num_tiers
    sellers = sorted(sol.hs_up)
    strikes = {gid: system.seller_params(gid) for gid in sellers}
    records: list[ExerciseRecord] = []
    entries: list[Entry] = []
    Q = len(rt.price)

    for bid, sched_arr in sol.buyer_p.items():
        levels_all = tiers.levels[bid]
        cls = _account_class(system, bid)
        realized_arr = realized_injection[bid]
        for q in range(Q):
            h = q // per_hour
            lam = rt.price[q]
            sched = float(sched_arr[h])
            realized = float(realized_arr[q])
            levels = levels_all[h]
            flagged = bool(realized < levels[0] - 1e-9
                           or realized > levels[-1] + 1e-9)
            if realized < sched:       # shortfall: up options
                for r in range(R):
                    held = float(sol.hd_up[bid][r, h])
                    qty = max(0.0, min(levels[r + 1], sched)
                              - max(realized, levels[r]))
                    qty = min(held, qty)
                    if qty <= 1e-12:
                        continue
                    sold = {j: float(sol.hs_up[j][r, h]) for j in sellers}
                    total_sold = sum(sold.values())
                    exercised = 0.0
                    payoff_total = 0.0
                    any_trigger = False
                    if total_sold > 1e-12:
                        for j, hs in sold.items():
                            vol = qty * hs / total_sold
                            if vol <= 1e-12:
                                continue
                            strike = strikes[j].strike_up
                            if lam > strike:
                                any_trigger = True
                                pay = (lam - strike) * vol * dt
                                entries.append(Entry(
                                    j, CLASS_FLEX, STAGE_RT, PRODUCT_FO_UP,
                                    day, q, -pay))
                                entries.append(Entry(
                                    bid, cls, STAGE_RT, PRODUCT_FO_UP, day, q,
                                    pay))
                                exercised += vol
                                payoff_total += pay
                    records.append(ExerciseRecord(
                        bid, r, day, q, any_trigger, True, exercised,
                        payoff_total / (exercised * dt) if exercised else 0.0,
                        flagged))
            elif realized > sched:     # surplus: down options
                for r in range(R):
                    held = float(sol.hd_dn[bid][r, h])
                    qty = max(0.0, min(realized, levels[r + 1])
                              - max(sched, levels[r]))
                    qty = min(held, qty)
                    if qty <= 1e-12:
                        continue
                    sold = {j: float(sol.hs_dn[j][r, h]) for j in sellers}
                    total_sold = sum(sold.values())
                    exercised = 0.0
                    payoff_total = 0.0
                    any_trigger = False
                    if total_sold > 1e-12:
                        for j, hs in sold.items():
                            vol = qty * hs / total_sold
                            if vol <= 1e-12:
                                continue
                            strike = strikes[j].strike_down
                            if lam < strike:
                                any_trigger = True
                                pay = (strike - lam) * vol * dt
                                entries.append(Entry(
                                    j, CLASS_FLEX, STAGE_RT, PRODUCT_FO_DOWN,
                                    day, q, -pay))
                                entries.append(Entry(
                                    bid, cls, STAGE_RT, PRODUCT_FO_DOWN, day,
                                    q, pay))
                                exercised += vol
                                payoff_total += pay
                    records.append(ExerciseRecord(
                        bid, r, day, q, any_trigger, True, exercised,
                        payoff_total / (exercised * dt) if exercised else 0.0,
                        flagged))
    return records, _iso_balance(entries)


def settle_ir(sol: DaSolution, prices: DaPrices,
              realized_injection: dict[str, np.ndarray],
              tiers: TierStructure, problem: DaProblem, day: int = 0
              ) -> list[Entry]:
    """Reserve procurement payments plus ex-post imbalance cost allocation.

    DA: suppliers are paid the product clearing price on their awards.
    RT: each constituent pays the DA price on its observed directional
    imbalance, prorated to 15 minutes and capped so the total charged never
    exceeds that interval's DA procurement cost; the ISO keeps the shortfall.
    """
    system = problem.system
    cfg = system.config
    per_hour = cfg.rt_per_hour
    T = problem.horizon
    entries: list[Entry] = []

    da_cost = {"up": np.zeros(T), "down": np.zeros(T)}
    rate = {"up": np.zeros(T), "down": np.zeros(T)}
    for product in problem.products:
        price = prices.reserve[product.name]
        pname = PRODUCT_IR_UP if product.direction == "up" else PRODUCT_IR_DOWN
        for g in system.generators:
            award = sol.reserve_award(g.id, product.name)
            for t in range(T):
                if award[t] > 1e-12:
                    entries.append(Entry(g.id, CLASS_FLEX, STAGE_DA, pname,
                                         day, t, price[t] * award[t]))
                    da_cost[product.direction][t] += price[t] * award[t]
        rate[product.direction] = np.maximum(rate[product.direction], price)

    charges: dict[tuple, float] = {}
    for direction, sign in (("up", -1.0), ("down", 1.0)):
        pname = PRODUCT_IR_UP if direction == "up" else PRODUCT_IR_DOWN
        for q in range(T * per_hour):
            t = q // per_hour
            cap = da_cost[direction][t] / per_hour
            raw: dict[str, float] = {}
            for bid, sched in sol.buyer_p.items():
                dev = float(realized_injection[bid][q] - sched[t])
                imbalance = max(0.0, sign * dev)
                raw[bid] = rate[direction][t] * imbalance / per_hour
            total = sum(raw.values())
            scale = min(1.0, cap / total) if total > 1e-12 else 0.0
            for bid, amount in raw.items():
                if amount * scale > 1e-12:
                    charges[(bid, pname, q)] = amount * scale
    for (bid, pname, q), amount in sorted(charges.items()):
        entries.append(Entry(bid, _account_class(system, bid), STAGE_RT,
                             pname, day, q, -amount))
    return _iso_balance(entries)


def iso_position(ledger: CashflowLedger, audit_tol: float = 1e-6
                 ) -> IsoPosition:
    """Operator net by product and stage, with a conservation audit."""
    groups: dict[tuple, float] = defaultdict(float)
    gross: dict[tuple, float] = defaultdict(float)
    for e in ledger.entries:
        key = (e.stage, e.product, e.day, e.interval)
        groups[key] += e.amount
        gross[key] += abs(e.amount)
    bad = [(key, total) for key, total in groups.items()
           if abs(total) > audit_tol * max(1.0, gross[key])]
    if bad:
        sample = "; ".join(f"{k}: residual {v:.3g}" for k, v in bad[:5])
        raise AuditError(f"ledger does not conserve cash in {len(bad)} "
                         f"groups: {sample}")

    net: dict[tuple[str, str], float] = defaultdict(float)
    for e in ledger.select(party_class=CLASS_ISO):
        net[(e.stage, e.product)] += e.amount
    da_ir = net.get((STAGE_DA, PRODUCT_IR_UP), 0.0) \
        + net.get((STAGE_DA, PRODUCT_IR_DOWN), 0.0)
    rt_ir = net.get((STAGE_RT, PRODUCT_IR_UP), 0.0) \
        + net.get((STAGE_RT, PRODUCT_IR_DOWN), 0.0)
    ratio = None
    if da_ir < -1e-12:
        ratio = rt_ir / -da_ir
    return IsoPosition(net=dict(net), total=sum(net.values()),
                       ir_recovery_ratio=ratio)


@dataclass
class CashflowStats:
    """Per-day component cashflows for one party class, with daily stats."""
    components: list[str]
    per_day: dict[int, dict[str, float]]
    mean: dict[str, float]
    std: dict[str, float]

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["day"] + self.components)
            for day in sorted(self.per_day):
                row = self.per_day[day]
                writer.writerow([day] + [f"{row.get(c, 0.0):.6f}"
                                         for c in self.components])
            writer.writerow(["mean"] + [f"{self.mean[c]:.6f}"
                                        for c in self.components])
            writer.writerow(["std"] + [f"{self.std[c]:.6f}"
                                       for c in self.components])


def aggregate_cashflows(ledger: CashflowLedger, classes,
                        rt_costs: dict[int, float] | None = None
                        ) -> CashflowStats:
    """Daily cashflows by (stage, product) for a set of party classes.

    The total column sums the components; when per-day RT re-dispatch costs
    are supplied a margin column (total minus those costs) is added.
    """
    if isinstance(classes, str):
        classes = {classes}
    rows: dict[int, dict[str, float]] = defaultdict(lambda: defaultdict(float))
    for e in ledger.entries:
        if e.party_class in classes:
            rows[e.day][f"{e.stage}_{e.product}"] += e.amount
    components: list[str] = sorted({c for row in rows.values() for c in row})
    for day, row in rows.items():
        row["total"] = sum(row[c] for c in components)
    components.append("total")
    if rt_costs is not None:
        for day, row in rows.items():
            row["margin"] = row["total"] - rt_costs.get(day, 0.0)
        components.append("margin")

    days = sorted(rows)
    mean = {}
    std = {}
    for c in components:
        series = np.array([rows[d].get(c, 0.0) for d in days]) \
            if days else np.zeros(1)
        mean[c] = float(series.mean())
        std[c] = float(series.std())
    return CashflowStats(components=components,
                         per_day={d: dict(rows[d]) for d in days},
                         mean=mean, std=std)
