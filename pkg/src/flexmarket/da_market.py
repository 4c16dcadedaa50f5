"""Day-ahead unit-commitment MILP in three flavors: base, imbalance-reserve
extended, and flexibility-option extended, plus restricted-LP pricing.

Prices come from re-solving the LP with all commitment binaries fixed at
their optimal values and reading constraint duals; degenerate duals resolve
to whatever basis the backend returns, which is recorded in the price
metadata.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .scenarios import PercentileTable, TierStructure
from .solver import INF, InfeasibleError, LinearModel, get_backend
from .system import (FlexSellerParams, Generator, MarketConfig,
                     ReserveProductDef, SystemModel, UncertainAccount)

FEASIBILITY_TOL = 1e-6


@dataclass
class DaProblem:
    """A built DA market instance: model, variable groups and tagged rows."""
    system: SystemModel
    lin: LinearModel
    horizon: int
    nl_forecast: PercentileTable
    balance_rows: list[int] = field(default_factory=list)
    env_up_rows: dict = field(default_factory=dict)     # (gid, t) -> row
    env_dn_rows: dict = field(default_factory=dict)
    ramp_up_rows: dict = field(default_factory=dict)    # (gid, t) -> row
    ramp_dn_rows: dict = field(default_factory=dict)
    ramp_res_up_rows: dict = field(default_factory=dict)
    ramp_res_dn_rows: dict = field(default_factory=dict)
    tier_rows: dict = field(default_factory=dict)       # (dir, r, t) -> row
    reserve_link_rows: dict = field(default_factory=dict)   # (product, t)
    reserve_step_rows: dict = field(default_factory=dict)   # (product, a, t)
    buyers: list[UncertainAccount] = field(default_factory=list)
    sellers: list[FlexSellerParams] = field(default_factory=list)
    products: list[ReserveProductDef] = field(default_factory=list)
    tiers: TierStructure | None = None
    fo_active: bool = False
    ir_active: bool = False
    warnings: list[str] = field(default_factory=list)

    def add_term(self, row: int, var: int, coeff: float) -> None:
        coeffs = self.lin.constraints[row].coeffs
        coeffs[var] = coeffs.get(var, 0.0) + coeff

    def shift_rhs(self, row: int, delta: float) -> None:
        con = self.lin.constraints[row]
        if con.lb > -INF:
            con.lb += delta
        if con.ub < INF:
            con.ub += delta

    def ensure_ramp_res_row(self, gen: Generator, t: int, direction: str) -> int:
        """Within-hour ramp reservation: awards in one direction cannot
        exceed the unit's hourly ramp while online."""
        rows = self.ramp_res_up_rows if direction == "up" else self.ramp_res_dn_rows
        key = (gen.id, t)
        if key not in rows:
            u = self.lin.var("u", key)
            rows[key] = self.lin.add_le({u: -gen.ramp_rate}, 0.0,
                                        f"ramp_res_{direction}", key)
        return rows[key]


@dataclass
class DaSolution:
    """Values of every DA decision plus the tagged cost decomposition."""
    objective: float
    gap: float
    cost_terms: dict[str, float]
    gen_p: dict[str, np.ndarray]
    commit: dict[str, np.ndarray]
    startup: dict[str, np.ndarray]
    shed: np.ndarray
    over: np.ndarray
    buyer_p: dict[str, np.ndarray] = field(default_factory=dict)
    hs_up: dict[str, np.ndarray] = field(default_factory=dict)   # seller -> (R,T)
    hs_dn: dict[str, np.ndarray] = field(default_factory=dict)
    hd_up: dict[str, np.ndarray] = field(default_factory=dict)   # buyer -> (R,T)
    hd_dn: dict[str, np.ndarray] = field(default_factory=dict)
    sd_up: dict[str, np.ndarray] = field(default_factory=dict)
    sd_dn: dict[str, np.ndarray] = field(default_factory=dict)
    y: dict[str, np.ndarray] = field(default_factory=dict)       # buyer -> (S,T)
    u_rt: dict[str, np.ndarray] = field(default_factory=dict)    # seller -> (R,T)
    reserve_on: dict = field(default_factory=dict)   # (gid, product) -> (T,)
    reserve_off: dict = field(default_factory=dict)
    reserve_served: dict = field(default_factory=dict)   # (product, step) -> (T,)
    reserve_slack: dict = field(default_factory=dict)
    max_violation: float = 0.0
    x: np.ndarray | None = None

    def reserve_award(self, gid: str, product: str) -> np.ndarray:
        on = self.reserve_on.get((gid, product))
        off = self.reserve_off.get((gid, product))
        if on is None and off is None:
            raise KeyError((gid, product))
        out = np.zeros_like(on if on is not None else off)
        if on is not None:
            out = out + on
        if off is not None:
            out = out + off
        return out

    def up_awards(self, products: list[ReserveProductDef]
                  ) -> dict[str, np.ndarray]:
        """Total upward flexibility award per unit per hour, either design."""
        dirs = {p.name: p.direction for p in products}
        out: dict[str, np.ndarray] = {}
        for gid, mat in self.hs_up.items():
            out[gid] = out.get(gid, 0.0) + mat.sum(axis=0)
        for source in (self.reserve_on, self.reserve_off):
            for (gid, product), arr in source.items():
                if dirs[product] == "up":
                    out[gid] = out.get(gid, np.zeros(len(arr))) + arr
        return out

    def down_awards(self, products: list[ReserveProductDef]
                    ) -> dict[str, np.ndarray]:
        dirs = {p.name: p.direction for p in products}
        out: dict[str, np.ndarray] = {}
        for gid, mat in self.hs_dn.items():
            out[gid] = out.get(gid, 0.0) + mat.sum(axis=0)
        for (gid, product), arr in self.reserve_on.items():
            if dirs[product] == "down":
                out[gid] = out.get(gid, np.zeros(len(arr))) + arr
        return out


@dataclass
class DaPrices:
    """Duals of the restricted LP: energy, option tiers, reserve products."""
    lam_da: np.ndarray                       # (T,)
    fo_up: np.ndarray | None = None          # (R, T) $/MW per tier
    fo_dn: np.ndarray | None = None
    reserve: dict[str, np.ndarray] = field(default_factory=dict)    # product -> (T,)
    step_duals: dict = field(default_factory=dict)   # (product, step) -> (T,)
    metadata: dict = field(default_factory=dict)


# -- base unit commitment ----------------------------------------------------

def build_base_uc(system: SystemModel, forecast: PercentileTable) -> DaProblem:
    """Deterministic 24 h unit commitment against the median net-load forecast.

    Uses a convex piecewise-linear dispatch cost, startup/shutdown indicator
    logic, hourly ramps with startup allowances and min up/down times. Demand
    that cannot be met at any cost lands on a penalized slack, so the problem
    stays feasible and short systems are flagged rather than rejected.
    """
    cfg = system.config
    T = cfg.da_horizon
    demand = forecast.at(50.0)
    if len(demand) < T:
        raise ValueError(f"forecast covers {len(demand)} hours, need {T}")
    demand = demand[:T]

    lin = LinearModel("da_market")
    prob = DaProblem(system=system, lin=lin, horizon=T, nl_forecast=forecast)

    if system.total_capacity() < demand.max():
        prob.warnings.append(
            f"total capacity {system.total_capacity():.1f} MW below peak "
            f"forecast {demand.max():.1f} MW; scarcity slack will bind")

    for g in system.generators:
        su_limit = max(g.p_min, g.ramp_rate)
        for t in range(T):
            key = (g.id, t)
            u = lin.add_var("u", key, 0, 1, integer=True)
            v = lin.add_var("v", key, 0, 1)
            w = lin.add_var("w", key, 0, 1)
            p = lin.add_var("p", key)
            lin.add_obj(u, g.no_load_cost, "no_load")
            lin.add_obj(v, g.startup_cost, "startup")
            seg_vars = []
            for k, (width, mc) in enumerate(g.cost_curve):
                s = lin.add_var("pseg", (g.id, k, t), 0, width)
                lin.add_obj(s, mc, "dispatch")
                seg_vars.append(s)
            lin.add_eq({p: 1.0, **{s: -1.0 for s in seg_vars}}, 0.0,
                       "dispatch_total", key)
            prob.env_up_rows[key] = lin.add_le({p: 1.0, u: -g.p_max}, 0.0,
                                               "env_up", key)
            prob.env_dn_rows[key] = lin.add_ge({p: 1.0, u: -g.p_min}, 0.0,
                                               "env_dn", key)
            if t == 0:
                lin.add_eq({v: 1.0, w: -1.0, u: -1.0}, 0.0, "commit_link", key)
                prob.ramp_up_rows[key] = lin.add_le(
                    {p: 1.0, v: -su_limit}, 0.0, "ramp_up", key)
            else:
                um1 = lin.var("u", (g.id, t - 1))
                pm1 = lin.var("p", (g.id, t - 1))
                lin.add_eq({v: 1.0, w: -1.0, u: -1.0, um1: 1.0}, 0.0,
                           "commit_link", key)
                prob.ramp_up_rows[key] = lin.add_le(
                    {p: 1.0, pm1: -1.0, um1: -g.ramp_rate, v: -su_limit}, 0.0,
                    "ramp_up", key)
                prob.ramp_dn_rows[key] = lin.add_le(
                    {pm1: 1.0, p: -1.0, u: -g.ramp_rate, w: -su_limit}, 0.0,
                    "ramp_dn", key)
            # binds the switch indicators exactly to the commitment pattern
            lin.add_le({v: 1.0, u: -1.0}, 0.0, "start_implies_on", key)
            lin.add_le({w: 1.0, u: 1.0}, 1.0, "stop_implies_off", key)
        for t in range(T):
            up_window = [lin.var("v", (g.id, tau))
                         for tau in range(max(0, t - g.min_up_time + 1), t + 1)]
            if g.min_up_time > 1:
                lin.add_le({**{vv: 1.0 for vv in up_window},
                            lin.var("u", (g.id, t)): -1.0}, 0.0,
                           "min_up", (g.id, t))
            dn_window = [lin.var("w", (g.id, tau))
                         for tau in range(max(0, t - g.min_down_time + 1), t + 1)]
            if g.min_down_time > 1:
                lin.add_le({**{ww: 1.0 for ww in dn_window},
                            lin.var("u", (g.id, t)): 1.0}, 1.0,
                           "min_down", (g.id, t))

    for t in range(T):
        shed = lin.add_var("shed", (t,))
        over = lin.add_var("over", (t,))
        lin.add_obj(shed, cfg.shortfall_penalty, "unserved_penalty")
        lin.add_obj(over, -cfg.surplus_penalty, "unserved_penalty")
        coeffs = {lin.var("p", (g.id, t)): 1.0 for g in system.generators}
        coeffs[shed] = 1.0
        coeffs[over] = -1.0
        prob.balance_rows.append(
            lin.add_eq(coeffs, float(demand[t]), "balance", (t,)))
    return prob


# -- imbalance reserve extension ---------------------------------------------

def apply_ir_design(prob: DaProblem, products: list[ReserveProductDef],
                    tiers: TierStructure) -> DaProblem:
    """Add stepped-demand reserve products with cascading across ranks.

    Step quantities are prediction-interval widths of the forecast net load.
    Each step is an equality ``served + slack = requirement`` with the slack
    priced at the step's scarcity value; awards of higher-ranked products
    count toward every lower-ranked requirement in the same direction.
    Hourly ramp rows are widened so a unit can swing from full down-reserve
    deployment to full up-reserve deployment within the hour.
    """
    lin = prob.lin
    system = prob.system
    T = prob.horizon
    nl = prob.nl_forecast
    overlap_check: dict[str, set] = {"up": set(), "down": set()}
    for product in products:
        for (lo, hi), _ in product.demand_steps:
            band = (lo, hi)
            if band in overlap_check[product.direction]:
                raise ValueError(f"product {product.name}: duplicate demand "
                                 f"step {band}")
            overlap_check[product.direction].add(band)

    for product in products:
        up = product.direction == "up"
        for g in system.generators:
            offline_ok = (up and g.is_fast
                          and g.start_lead_time <= product.response_time)
            cap_off = g.offline_up_cap(product.response_time) if offline_ok else 0.0
            for t in range(T):
                key = (g.id, t)
                u = lin.var("u", key)
                r_on = lin.add_var("res_on", (g.id, product.name, t))
                # Headroom and within-hour ramp reservation while online.
                env = prob.env_up_rows[key] if up else prob.env_dn_rows[key]
                prob.add_term(env, r_on, 1.0 if up else -1.0)
                ramp_row = prob.ensure_ramp_res_row(g, t, product.direction)
                prob.add_term(ramp_row, r_on, product.ramp_factor)
                # Hourly ramp must survive down-to-up deployment swings.
                if up:
                    if (g.id, t) in prob.ramp_up_rows:
                        prob.add_term(prob.ramp_up_rows[(g.id, t)], r_on, 1.0)
                    if (g.id, t + 1) in prob.ramp_dn_rows:
                        prob.add_term(prob.ramp_dn_rows[(g.id, t + 1)], r_on, 1.0)
                else:
                    if (g.id, t + 1) in prob.ramp_up_rows:
                        prob.add_term(prob.ramp_up_rows[(g.id, t + 1)], r_on, 1.0)
                    if (g.id, t) in prob.ramp_dn_rows:
                        prob.add_term(prob.ramp_dn_rows[(g.id, t)], r_on, 1.0)
                if offline_ok:
                    r_off = lin.add_var("res_off", (g.id, product.name, t))
                    lin.add_le({r_off: 1.0, u: cap_off}, cap_off,
                               "res_off_cap", (g.id, product.name, t))

    # Requirement side: per-step served volumes with priced slack. Awards of
    # higher-ranked products may be assigned to lower-ranked requirements in
    # the same direction, but each awarded MW serves at most one product.
    for donor in products:
        takers = [p2 for p2 in products
                  if p2.direction == donor.direction
                  and p2.cascade_rank <= donor.cascade_rank]
        for t in range(T):
            pool = {}
            for g in system.generators:
                pool[lin.var("res_on", (g.id, donor.name, t))] = -1.0
                if lin.has_var("res_off", (g.id, donor.name, t)):
                    pool[lin.var("res_off", (g.id, donor.name, t))] = -1.0
            for taker in takers:
                pool[lin.add_var("res_assign",
                                 (donor.name, taker.name, t))] = 1.0
            lin.add_le(pool, 0.0, "res_assign_pool", (donor.name, t))

    for product in products:
        quantities = [nl.at(hi) - nl.at(lo)
                      for (lo, hi), _ in product.demand_steps]
        donors = [p2 for p2 in products
                  if p2.direction == product.direction
                  and p2.cascade_rank >= product.cascade_rank]
        for t in range(T):
            served_vars = []
            for a, ((lo, hi), price) in enumerate(product.demand_steps):
                served = lin.add_var("res_served", (product.name, a, t))
                slack = lin.add_var("res_slack", (product.name, a, t))
                lin.add_obj(slack, price, "reserve_shortfall")
                req = float(quantities[a][t])
                prob.reserve_step_rows[(product.name, a, t)] = lin.add_eq(
                    {served: 1.0, slack: 1.0}, req, "res_step",
                    (product.name, a, t))
                served_vars.append(served)
            coeffs = {s: 1.0 for s in served_vars}
            for donor in donors:
                coeffs[lin.var("res_assign", (donor.name, product.name, t))] \
                    = -1.0
            prob.reserve_link_rows[(product.name, t)] = lin.add_le(
                coeffs, 0.0, "res_link", (product.name, t))

    prob.products = list(products)
    prob.tiers = tiers if prob.tiers is None else prob.tiers
    prob.ir_active = True
    return prob


# -- flexibility option extension ----------------------------------------------

def apply_fo_design(prob: DaProblem, sellers: list[FlexSellerParams],
                    buyers: list[UncertainAccount], tiers: TierStructure,
                    cfg: MarketConfig) -> DaProblem:
    """Add the endogenous flexibility-option market to the DA problem.

    Buyers get a free schedule spanning their availability levels plus tiered
    hedging volumes; sellers get tier sales bounded by ramp and capacity
    envelopes; fast-start sellers may back one tier per hour while offline.
    The objective gains the probability-weighted RT deployment costs, the
    self-hedge scarcity costs and the volume tie-breaker penalty.
    """
    lin = prob.lin
    system = prob.system
    T = prob.horizon
    R = tiers.num_tiers
    S = tiers.num_levels
    pi_up = tiers.prob_up
    pi_dn = tiers.prob_down
    try:
        med_idx = tiers.percentiles.index(50.0)
    except ValueError:
        raise ValueError("tier percentiles must include the median (50)") from None

    for b in buyers:
        if b.id not in tiers.levels:
            raise ValueError(f"no tier levels for buyer {b.id}")
        levels = tiers.levels[b.id]
        if np.any(np.diff(levels, axis=1) < -1e-9):
            raise ValueError(f"buyer {b.id}: availability levels not ascending")
        for t in range(T):
            lb = 0.0 if not b.allows_negative_injection else -INF
            pb = lin.add_var("p_buyer", (b.id, t), lb, INF)
            if b.da_cost:
                lin.add_obj(pb, b.da_cost, "dispatch")
            # Buyer joins the balance; its median injection leaves the RHS.
            row = prob.balance_rows[t]
            prob.add_term(row, pb, 1.0)
            prob.shift_rhs(row, float(levels[t, med_idx]))
            for r in range(R):
                for name, cost, tag in (
                        ("hd_up", -pi_up[r] * b.da_cost, "fo_buyer_rt"),
                        ("hd_dn", pi_dn[r] * b.da_cost, "fo_buyer_rt"),
                        ("sd_up", pi_up[r] * (b.self_hedge_cost_up - b.da_cost),
                         "fo_self_hedge"),
                        ("sd_dn", pi_dn[r] * (b.da_cost - b.self_hedge_cost_down),
                         "fo_self_hedge")):
                    var = lin.add_var(name, (b.id, r, t))
                    lin.add_obj(var, float(cost), tag)
            for s in range(S):
                yv = lin.add_var("y", (b.id, s, t))
                lin.add_obj(yv, cfg.fo_penalty_m, "fo_volume_penalty")

    for fs in sellers:
        g = system.generator(fs.generator_id)
        fast = g.is_fast
        cap_off = g.offline_up_cap(60.0) if fast else 0.0
        for t in range(T):
            key = (g.id, t)
            u = lin.var("u", key)
            urt_vars = []
            if fast:
                for r in range(R):
                    urt = lin.add_var("u_rt", (g.id, r, t), 0, 1, integer=True)
                    lin.add_obj(urt, g.startup_cost * float(pi_up[r]),
                                "fo_fast_startup")
                    urt_vars.append(urt)
                lin.add_le({u: 1.0, **{x: 1.0 for x in urt_vars}}, 1.0,
                           "fast_exclusive", key)
            ramp_up_res = prob.ensure_ramp_res_row(g, t, "up")
            ramp_dn_res = prob.ensure_ramp_res_row(g, t, "down")
            for r in range(R):
                up = lin.add_var("hs_up", (g.id, r, t))
                dn = lin.add_var("hs_dn", (g.id, r, t))
                lin.add_obj(up, float(pi_up[r]) * fs.strike_up, "fo_seller_rt")
                lin.add_obj(dn, -float(pi_dn[r]) * fs.strike_down, "fo_seller_rt")
                if fs.capacity_bid:
                    lin.add_obj(up, fs.capacity_bid, "fo_capacity_bid")
                    lin.add_obj(dn, fs.capacity_bid, "fo_capacity_bid")
                prob.add_term(prob.env_up_rows[key], up, 1.0)
                prob.add_term(prob.env_dn_rows[key], dn, -1.0)
                prob.add_term(ramp_up_res, up, 1.0)
                prob.add_term(ramp_dn_res, dn, 1.0)
                if fast:
                    # While offline the sale rides on this tier's backing flag.
                    lin.add_le({up: 1.0, u: -g.p_max, urt_vars[r]: -cap_off},
                               0.0, "fast_tier_cap", (g.id, r, t))
            if fast and urt_vars:
                for x in urt_vars:
                    prob.add_term(prob.env_up_rows[key], x, -cap_off)
                    prob.add_term(ramp_up_res, x, -cap_off)
                # The offline relaxation above frees the envelope for tier
                # sales only; energy output still requires commitment.
                lin.add_le({lin.var("p", key): 1.0, u: -g.p_max}, 0.0,
                           "commit_cap", key)

    for direction in ("up", "down"):
        hs_name = "hs_up" if direction == "up" else "hs_dn"
        hd_name = "hd_up" if direction == "up" else "hd_dn"
        for r in range(R):
            for t in range(T):
                coeffs = {}
                for fs in sellers:
                    coeffs[lin.var(hs_name, (fs.generator_id, r, t))] = 1.0
                for b in buyers:
                    coeffs[lin.var(hd_name, (b.id, r, t))] = -1.0
                prob.tier_rows[(direction, r, t)] = lin.add_eq(
                    coeffs, 0.0, "tier_balance", (direction, r, t))

    for b in buyers:
        levels = tiers.levels[b.id]
        for t in range(T):
            pb = lin.var("p_buyer", (b.id, t))
            hd_dn = [lin.var("hd_dn", (b.id, r, t)) for r in range(R)]
            sd_dn = [lin.var("sd_dn", (b.id, r, t)) for r in range(R)]
            hd_up = [lin.var("hd_up", (b.id, r, t)) for r in range(R)]
            sd_up = [lin.var("sd_up", (b.id, r, t)) for r in range(R)]
            for r in range(R):
                width = float(levels[t, r + 1] - levels[t, r])
                lin.add_le({hd_dn[r]: 1.0, sd_dn[r]: 1.0}, width,
                           "tier_width_dn", (b.id, r, t))
            for s in range(S):
                coeffs = {pb: 1.0}
                for r in range(s):
                    coeffs[hd_dn[r]] = 1.0
                    coeffs[sd_dn[r]] = 1.0
                for r in range(s, R):
                    coeffs[hd_up[r]] = -1.0
                    coeffs[sd_up[r]] = -1.0
                lin.add_eq(coeffs, float(levels[t, s]), "hedge_identity",
                           (b.id, s, t))
                yv = lin.var("y", (b.id, s, t))
                vol = {yv: -1.0}
                for r in range(s):
                    vol[hd_dn[r]] = 1.0
                    vol[sd_dn[r]] = 1.0
                for r in range(s, R):
                    vol[hd_up[r]] = 1.0
                    vol[sd_up[r]] = 1.0
                lin.add_le(vol, 0.0, "volume_lb", (b.id, s, t))
                lin.add_le({pb: 1.0, yv: -1.0}, float(levels[t, s]),
                           "volume_dev_up", (b.id, s, t))
                lin.add_le({pb: -1.0, yv: -1.0}, -float(levels[t, s]),
                           "volume_dev_dn", (b.id, s, t))

    prob.buyers = list(buyers)
    prob.sellers = list(sellers)
    prob.tiers = tiers
    prob.fo_active = True
    return prob


# -- solve and price -----------------------------------------------------------

def _collect(lin: LinearModel, x: np.ndarray, name: str, keys, shape
             ) -> np.ndarray:
    out = np.zeros(shape)
    for key, pos in keys:
        out[pos] = x[lin.var(name, key)]
    return out


def solve_da(prob: DaProblem, cfg: MarketConfig | None = None,
             backend=None) -> DaSolution:
    """Solve the MILP to the configured gap and unpack the solution."""
    cfg = cfg or prob.system.config
    backend = backend or get_backend()
    res = backend.solve(prob.lin, mip_gap=cfg.mip_gap)
    if res.status == "infeasible":
        raise InfeasibleError(_infeasibility_summary(prob))
    if not res.optimal and res.status != "limit":
        raise InfeasibleError(f"DA solve ended with status {res.status}")

    lin = prob.lin
    x = res.x
    T = prob.horizon
    R = prob.tiers.num_tiers if prob.tiers is not None else 0
    S = prob.tiers.num_levels if prob.tiers is not None else 0

    sol = DaSolution(
        objective=res.objective, gap=res.mip_gap,
        cost_terms=lin.decompose(x),
        gen_p={g.id: _collect(lin, x, "p", (((g.id, t), t) for t in range(T)), T)
               for g in prob.system.generators},
        commit={g.id: np.rint(_collect(
            lin, x, "u", (((g.id, t), t) for t in range(T)), T)).astype(int)
            for g in prob.system.generators},
        startup={g.id: _collect(lin, x, "v", (((g.id, t), t) for t in range(T)), T)
                 for g in prob.system.generators},
        shed=_collect(lin, x, "shed", ((((t,)), t) for t in range(T)), T),
        over=_collect(lin, x, "over", ((((t,)), t) for t in range(T)), T),
        x=x)

    if prob.fo_active:
        for fs in prob.sellers:
            gid = fs.generator_id
            grid = [((gid, r, t), (r, t)) for r in range(R) for t in range(T)]
            sol.hs_up[gid] = _collect(lin, x, "hs_up", grid, (R, T))
            sol.hs_dn[gid] = _collect(lin, x, "hs_dn", grid, (R, T))
            if prob.system.generator(gid).is_fast:
                sol.u_rt[gid] = np.rint(
                    _collect(lin, x, "u_rt", grid, (R, T))).astype(int)
        for b in prob.buyers:
            grid = [((b.id, r, t), (r, t)) for r in range(R) for t in range(T)]
            sgrid = [((b.id, s, t), (s, t)) for s in range(S) for t in range(T)]
            sol.buyer_p[b.id] = _collect(
                lin, x, "p_buyer", (((b.id, t), t) for t in range(T)), T)
            sol.hd_up[b.id] = _collect(lin, x, "hd_up", grid, (R, T))
            sol.hd_dn[b.id] = _collect(lin, x, "hd_dn", grid, (R, T))
            sol.sd_up[b.id] = _collect(lin, x, "sd_up", grid, (R, T))
            sol.sd_dn[b.id] = _collect(lin, x, "sd_dn", grid, (R, T))
            sol.y[b.id] = _collect(lin, x, "y", sgrid, (S, T))

    if prob.ir_active:
        for product in prob.products:
            for g in prob.system.generators:
                grid = [((g.id, product.name, t), t) for t in range(T)]
                sol.reserve_on[(g.id, product.name)] = _collect(
                    lin, x, "res_on", grid, T)
                if lin.has_var("res_off", (g.id, product.name, 0)):
                    sol.reserve_off[(g.id, product.name)] = _collect(
                        lin, x, "res_off", grid, T)
            for a in range(len(product.demand_steps)):
                grid = [((product.name, a, t), t) for t in range(T)]
                sol.reserve_served[(product.name, a)] = _collect(
                    lin, x, "res_served", grid, T)
                sol.reserve_slack[(product.name, a)] = _collect(
                    lin, x, "res_slack", grid, T)

    sol.max_violation = _max_violation(prob, x)
    return sol


def _max_violation(prob: DaProblem, x: np.ndarray) -> float:
    worst = 0.0
    for con in prob.lin.constraints:
        val = sum(c * x[v] for v, c in con.coeffs.items())
        if con.lb > -INF:
            worst = max(worst, con.lb - val)
        if con.ub < INF:
            worst = max(worst, val - con.ub)
    return worst


def _infeasibility_summary(prob: DaProblem) -> str:
    cfg = prob.system.config
    demand = prob.nl_forecast.at(50.0)[:prob.horizon]
    cap = prob.system.total_capacity()
    min_gen = sum(g.p_min for g in prob.system.generators)
    hints = [f"peak demand {demand.max():.1f} MW vs capacity {cap:.1f} MW",
             f"min demand {demand.min():.1f} MW vs committed-floor risk "
             f"{min_gen:.1f} MW"]
    return "DA market infeasible; " + "; ".join(hints)


def export_solution_csv(prob: DaProblem, sol: DaSolution, path: str) -> None:
    """Dump every decision value keyed by (variable, index tuple)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "key", "value"])
        for var in prob.lin.variables:
            value = sol.x[var.index]
            if abs(value) > 1e-9:
                writer.writerow([var.name, "/".join(str(k) for k in var.key),
                                 f"{value:.6f}"])


def export_prices_csv(prices: DaPrices, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "key", "hour", "price"])
        for t, lam in enumerate(prices.lam_da):
            writer.writerow(["energy", "", t, f"{lam:.6f}"])
        for name, mat in (("fo_up", prices.fo_up), ("fo_down", prices.fo_dn)):
            if mat is None:
                continue
            for r in range(mat.shape[0]):
                for t in range(mat.shape[1]):
                    writer.writerow([name, r, t, f"{mat[r, t]:.6f}"])
        for product, arr in sorted(prices.reserve.items()):
            for t, value in enumerate(arr):
                writer.writerow(["reserve", product, t, f"{value:.6f}"])


def compute_prices(prob: DaProblem, sol: DaSolution, backend=None) -> DaPrices:
    """Restricted pricing: fix all binaries at the solution and read LP duals."""
    backend = backend or get_backend()
    fixed: dict[int, float] = {}
    for var in prob.lin.variables:
        if var.integer:
            fixed[var.index] = float(np.rint(sol.x[var.index]))
    res = backend.solve(prob.lin, fixed=fixed, want_duals=True)
    if not res.optimal:
        raise InfeasibleError(
            "pricing LP failed after fixing commitments; this indicates an "
            "inconsistent solution")
    duals = res.duals
    T = prob.horizon
    prices = DaPrices(
        lam_da=np.array([duals[prob.balance_rows[t]] for t in range(T)]),
        metadata={"backend": getattr(backend, "name", "unknown"),
                  "degenerate_duals": "backend default basis"})
    if prob.fo_active:
        R = prob.tiers.num_tiers
        prices.fo_up = np.array(
            [[duals[prob.tier_rows[("up", r, t)]] for t in range(T)]
             for r in range(R)])
        prices.fo_dn = np.array(
            [[duals[prob.tier_rows[("down", r, t)]] for t in range(T)]
             for r in range(R)])
    for product in prob.products:
        # Link rows are written served - awards <= 0, so the award value is
        # the negated dual.
        prices.reserve[product.name] = np.array(
            [-duals[prob.reserve_link_rows[(product.name, t)]]
             for t in range(T)])
        for a in range(len(product.demand_steps)):
            prices.step_duals[(product.name, a)] = np.array(
                [duals[prob.reserve_step_rows[(product.name, a, t)]]
                 for t in range(T)])
    return prices
