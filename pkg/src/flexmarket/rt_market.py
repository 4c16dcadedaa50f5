"""Real-time rollout: hour-ahead commitment of fast-start units, 15-minute
economic dispatch with scarcity-priced reserve slack, and the simplified
per-scenario balancing model used for large out-of-sample sweeps.

All capacity reserved for options or reserves day-ahead is released here:
nothing in RT holds awards back, and every online unit may re-dispatch.
Deviation offers follow the strike convention: increments above the DA
schedule price at strike_up, decrements at strike_down.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .da_market import DaSolution
from .scenarios import ScenarioSet
from .solver import LinearModel, get_backend
from .system import MarketConfig, SystemModel


@dataclass
class RtState:
    """Carry-over state between RT solves within one simulated day."""
    commit: dict[str, np.ndarray]            # (24,) working commitments
    da_commit: dict[str, np.ndarray]
    prev_p: dict[str, float]
    prev_online: dict[str, int]
    extra_startup_cost: np.ndarray           # (24,) $ beyond the DA plan
    extra_noload_cost: np.ndarray
    released_up: np.ndarray                  # (24,) MW of DA awards released
    released_down: np.ndarray

    @classmethod
    def from_da(cls, system: SystemModel, da: DaSolution,
                released_up: np.ndarray, released_down: np.ndarray
                ) -> "RtState":
        T = len(next(iter(da.commit.values())))
        return cls(
            commit={g.id: da.commit[g.id].copy() for g in system.generators},
            da_commit={g.id: da.commit[g.id].copy() for g in system.generators},
            prev_p={g.id: float(da.gen_p[g.id][0] * da.commit[g.id][0])
                    for g in system.generators},
            prev_online={g.id: int(da.commit[g.id][0])
                         for g in system.generators},
            extra_startup_cost=np.zeros(T),
            extra_noload_cost=np.zeros(T),
            released_up=released_up, released_down=released_down)


@dataclass
class RtResult:
    """Per-interval RT outcomes for one day at 15-minute resolution."""
    price: np.ndarray
    dispatch: dict[str, np.ndarray]
    shed: np.ndarray
    over: np.ndarray
    reserve_slack: np.ndarray
    rtd_offer_cost: np.ndarray               # $: strike-priced deviations
    scarcity_cost: np.ndarray                # $: penalties incl. reserve slack
    rtc_production_cost: np.ndarray          # $: physical cost of RTC plan
    rtd_production_cost: np.ndarray
    da_production_cost: np.ndarray
    commit: dict[str, np.ndarray]
    unit_incremental_cost: dict[str, np.ndarray]
    extra_commitment_cost: float = 0.0
    released_up: np.ndarray | None = None
    released_down: np.ndarray | None = None
    max_balance_residual: float = 0.0

    @property
    def rtd_incremental_cost(self) -> float:
        """Offer-priced RT deployment cost plus extra commitment costs."""
        return float(self.rtd_offer_cost.sum() + self.extra_commitment_cost)

    @property
    def total_scarcity_cost(self) -> float:
        return float(self.scarcity_cost.sum())


def _physical_interval_cost(system: SystemModel, dispatch: dict[str, float],
                            online: dict[str, int], dt: float) -> float:
    cost = 0.0
    for g in system.generators:
        if online.get(g.id, 0):
            cost += (g.dispatch_cost(dispatch.get(g.id, 0.0))
                     + g.no_load_cost) * dt
    return cost


def _da_reference(da: DaSolution, gid: str, hour: int) -> float:
    return float(da.gen_p[gid][hour] * da.commit[gid][hour])


def run_rtc(system: SystemModel, state: RtState, da: DaSolution,
            actual_nl: np.ndarray, hour: int, cfg: MarketConfig,
            backend=None) -> tuple[RtState, dict]:
    """Hour-ahead re-commitment over the look-ahead horizon.

    Fast-start units whose lead time fits inside the commitment lead may
    change status; all other units keep their DA commitment. The first
    hour's decisions are frozen into the state; later hours are advisory.
    """
    backend = backend or get_backend()
    per_hour = cfg.rt_per_hour
    T = cfg.da_horizon
    hours = list(range(hour, min(hour + round(cfg.rtc_horizon), T)))
    quarters = [(h, q) for h in hours for q in range(per_hour)]
    lead_minutes = cfg.rtc_lead * 60.0
    eligible = {g.id for g in system.fast_units()
                if g.start_lead_time <= lead_minutes}

    lin = LinearModel("rtc")
    uvar: dict[tuple, int] = {}
    for g in system.generators:
        prev_status = state.prev_online[g.id] if hour > 0 else \
            int(state.da_commit[g.id][0])
        for i, h in enumerate(hours):
            if g.id in eligible:
                uvar[(g.id, h)] = lin.add_var("u", (g.id, h), 0, 1,
                                              integer=True)
                lin.add_obj(uvar[(g.id, h)], g.no_load_cost, "commitment")
                start = lin.add_var("start", (g.id, h), 0, 1)
                lin.add_obj(start, g.startup_cost, "commitment")
                if i == 0:
                    lin.add_ge({start: 1.0, uvar[(g.id, h)]: -1.0},
                               -float(prev_status), "start_def", (g.id, h))
                else:
                    lin.add_ge({start: 1.0, uvar[(g.id, h)]: -1.0,
                                uvar[(g.id, hours[i - 1])]: 1.0}, 0.0,
                               "start_def", (g.id, h))
            else:
                fixed = float(state.commit[g.id][h])
                uvar[(g.id, h)] = lin.add_var("u", (g.id, h), fixed, fixed)

    dt = cfg.rt_resolution
    for g in system.generators:
        fs = system.seller_params(g.id)
        qr = g.ramp_rate * dt
        prev_p_var = None
        prev_h = None
        for h, q in quarters:
            key = (g.id, h, q)
            u = uvar[(g.id, h)]
            p = lin.add_var("p", key)
            inc = lin.add_var("inc", key)
            dec = lin.add_var("dec", key)
            lin.add_obj(inc, fs.strike_up * dt, "deviation")
            lin.add_obj(dec, -fs.strike_down * dt, "deviation")
            ref = _da_reference(da, g.id, h)
            lin.add_eq({p: 1.0, inc: -1.0, dec: 1.0}, ref, "dev_split", key)
            lin.add_le({p: 1.0, u: -g.p_max}, 0.0, "cap", key)
            lin.add_ge({p: 1.0, u: -g.p_min}, 0.0, "floor", key)
            # Quarter-by-quarter ramping applies inside a commitment hour;
            # hour-to-hour trajectories were vetted at hourly granularity.
            if prev_p_var is not None and prev_h == h:
                lin.add_le({p: 1.0, prev_p_var: -1.0, u: -qr}, 0.0,
                           "ramp_up", key)
                lin.add_le({prev_p_var: 1.0, p: -1.0, u: -qr}, 0.0,
                           "ramp_dn", key)
            prev_p_var = p
            prev_h = h

    for h, q in quarters:
        gq = h * per_hour + q
        shed = lin.add_var("shed", (h, q))
        over = lin.add_var("over", (h, q))
        rslack = lin.add_var("rslack", (h, q))
        lin.add_obj(shed, cfg.shortfall_penalty * dt, "scarcity")
        lin.add_obj(over, -cfg.surplus_penalty * dt, "scarcity")
        lin.add_obj(rslack, cfg.rt_spin_scarcity * dt, "scarcity")
        coeffs = {lin.var("p", (g.id, h, q)): 1.0 for g in system.generators}
        coeffs[shed] = 1.0
        coeffs[over] = -1.0
        lin.add_eq(coeffs, float(actual_nl[gq]), "balance", (h, q))
        head = {lin.var("p", (g.id, h, q)): -1.0 for g in system.generators}
        head[rslack] = 1.0
        for g in system.generators:
            head[uvar[(g.id, h)]] = head.get(uvar[(g.id, h)], 0.0) + g.p_max
        lin.add_ge(head, cfg.rt_reserve_requirement, "reserve", (h, q))

    res = backend.solve(lin, mip_gap=cfg.mip_gap)
    if res.status == "infeasible":
        raise RuntimeError("RTC infeasible despite scarcity slack")
    x = res.x

    frozen = hours[0]
    detail = {"dispatch": {}, "production_cost": np.zeros(per_hour)}
    for g in system.generators:
        status = int(round(x[uvar[(g.id, frozen)]]))
        if g.id in eligible:
            prev = state.prev_online[g.id] if frozen > 0 else 0
            if status and not prev and not state.da_commit[g.id][frozen]:
                state.extra_startup_cost[frozen] += g.startup_cost
            if status and not state.da_commit[g.id][frozen]:
                state.extra_noload_cost[frozen] += g.no_load_cost
            state.commit[g.id][frozen] = status
        detail["dispatch"][g.id] = np.array(
            [x[lin.var("p", (g.id, frozen, q))] for q in range(per_hour)])
    for q in range(per_hour):
        online = {g.id: int(state.commit[g.id][frozen])
                  for g in system.generators}
        disp = {g.id: float(detail["dispatch"][g.id][q])
                for g in system.generators}
        detail["production_cost"][q] = _physical_interval_cost(
            system, disp, online, dt)
    return state, detail


def run_rtd(system: SystemModel, state: RtState, da: DaSolution,
            actual_nl: float, hour: int, cfg: MarketConfig, backend=None,
            restrict_to_awards: bool = False,
            up_awards: dict[str, np.ndarray] | None = None,
            down_awards: dict[str, np.ndarray] | None = None,
            same_hour_as_prev: bool = False) -> dict:
    """Single-interval economic dispatch with commitments fixed.

    The RT price is the balance dual. With ``restrict_to_awards`` each
    unit's deviation is capped at its DA award, mirroring the freedoms of
    the simplified RT model.
    """
    backend = backend or get_backend()
    dt = cfg.rt_resolution
    lin = LinearModel("rtd")
    for g in system.generators:
        online = int(state.commit[g.id][hour])
        fs = system.seller_params(g.id)
        key = (g.id,)
        p = lin.add_var("p", key, 0.0, g.p_max * online)
        inc = lin.add_var("inc", key)
        dec = lin.add_var("dec", key)
        if online:
            lin.add_ge({p: 1.0}, g.p_min, "floor", key)
        lin.add_obj(inc, fs.strike_up * dt, "deviation")
        lin.add_obj(dec, -fs.strike_down * dt, "deviation")
        ref = _da_reference(da, g.id, hour)
        lin.add_eq({p: 1.0, inc: -1.0, dec: 1.0}, ref, "dev_split", key)
        if restrict_to_awards:
            cap_up = float(up_awards.get(g.id, np.zeros(hour + 1))[hour]) \
                if up_awards else 0.0
            cap_dn = float(down_awards.get(g.id, np.zeros(hour + 1))[hour]) \
                if down_awards else 0.0
            lin.add_le({inc: 1.0}, cap_up, "award_cap_up", key)
            lin.add_le({dec: 1.0}, cap_dn, "award_cap_dn", key)
        elif same_hour_as_prev and state.prev_online[g.id] and online:
            qr = g.ramp_rate * dt
            prev = state.prev_p[g.id]
            lin.add_le({p: 1.0}, prev + qr, "ramp_up", key)
            lin.add_ge({p: 1.0}, min(max(prev - qr, g.p_min), g.p_max),
                       "ramp_dn", key)

    shed = lin.add_var("shed", ())
    over = lin.add_var("over", ())
    rslack = lin.add_var("rslack", ())
    lin.add_obj(shed, cfg.shortfall_penalty * dt, "scarcity")
    lin.add_obj(over, -cfg.surplus_penalty * dt, "scarcity")
    lin.add_obj(rslack, cfg.rt_spin_scarcity * dt, "scarcity")
    coeffs = {lin.var("p", (g.id,)): 1.0 for g in system.generators}
    coeffs[shed] = 1.0
    coeffs[over] = -1.0
    rhs = float(actual_nl)
    if restrict_to_awards:
        # Deviations are measured against the scheduled net load, so any DA
        # balance slack persists rather than distorting unit increments.
        rhs += float(da.over[hour] - da.shed[hour])
    balance = lin.add_eq(coeffs, rhs, "balance", ())
    head = {lin.var("p", (g.id,)): -1.0 for g in system.generators}
    head[rslack] = 1.0
    req = cfg.rt_reserve_requirement - sum(
        g.p_max * int(state.commit[g.id][hour]) for g in system.generators)
    lin.add_ge(head, req, "reserve", ())

    res = backend.solve(lin, want_duals=True)
    if not res.optimal:
        raise RuntimeError("RTD dispatch failed")
    x = res.x
    price = float(res.duals[balance]) / dt
    dispatch = {g.id: float(x[lin.var("p", (g.id,))])
                for g in system.generators}
    offer_cost = sum(
        x[lin.var("inc", (g.id,))] * system.seller_params(g.id).strike_up
        - x[lin.var("dec", (g.id,))] * system.seller_params(g.id).strike_down
        for g in system.generators) * dt
    scarcity = (x[shed] * cfg.shortfall_penalty
                - x[over] * cfg.surplus_penalty
                + x[rslack] * cfg.rt_spin_scarcity) * dt
    return {"dispatch": dispatch, "price": price, "shed": float(x[shed]),
            "over": float(x[over]), "reserve_slack": float(x[rslack]),
            "offer_cost": float(offer_cost), "scarcity_cost": float(scarcity)}


def run_day(system: SystemModel, da: DaSolution, actual_nl: np.ndarray,
            cfg: MarketConfig, backend=None, up_awards=None, down_awards=None,
            restrict_to_awards: bool = False, skip_rtc: bool = False
            ) -> RtResult:
    """Roll one day forward: RTC each hour, then the RTD intervals."""
    backend = backend or get_backend()
    T = cfg.da_horizon
    per_hour = cfg.rt_per_hour
    Q = T * per_hour
    if len(actual_nl) != Q:
        raise ValueError(f"actuals must cover {Q} intervals")
    up_awards = up_awards or {}
    down_awards = down_awards or {}
    rel_up = np.zeros(T)
    rel_dn = np.zeros(T)
    for arr in up_awards.values():
        rel_up = rel_up + arr
    for arr in down_awards.values():
        rel_dn = rel_dn + arr
    state = RtState.from_da(system, da, rel_up, rel_dn)

    result = RtResult(
        price=np.zeros(Q),
        dispatch={g.id: np.zeros(Q) for g in system.generators},
        shed=np.zeros(Q), over=np.zeros(Q), reserve_slack=np.zeros(Q),
        rtd_offer_cost=np.zeros(Q), scarcity_cost=np.zeros(Q),
        rtc_production_cost=np.zeros(Q), rtd_production_cost=np.zeros(Q),
        da_production_cost=np.zeros(Q), commit={},
        unit_incremental_cost={g.id: np.zeros(Q) for g in system.generators},
        released_up=rel_up, released_down=rel_dn)

    dt = cfg.rt_resolution
    for hour in range(T):
        if not skip_rtc:
            state, detail = run_rtc(system, state, da, actual_nl, hour, cfg,
                                    backend)
            result.rtc_production_cost[
                hour * per_hour:(hour + 1) * per_hour] = detail["production_cost"]
        for q in range(per_hour):
            gq = hour * per_hour + q
            frag = run_rtd(system, state, da, actual_nl[gq], hour, cfg,
                           backend, restrict_to_awards, up_awards,
                           down_awards, same_hour_as_prev=q > 0)
            result.price[gq] = frag["price"]
            result.shed[gq] = frag["shed"]
            result.over[gq] = frag["over"]
            result.reserve_slack[gq] = frag["reserve_slack"]
            result.rtd_offer_cost[gq] = frag["offer_cost"]
            result.scarcity_cost[gq] = frag["scarcity_cost"]
            online = {g.id: int(state.commit[g.id][hour])
                      for g in system.generators}
            da_online = {g.id: int(da.commit[g.id][hour])
                         for g in system.generators}
            da_disp = {g.id: _da_reference(da, g.id, hour)
                       for g in system.generators}
            result.rtd_production_cost[gq] = _physical_interval_cost(
                system, frag["dispatch"], online, dt)
            result.da_production_cost[gq] = _physical_interval_cost(
                system, da_disp, da_online, dt)
            for g in system.generators:
                result.dispatch[g.id][gq] = frag["dispatch"][g.id]
                rt_c = (g.dispatch_cost(frag["dispatch"][g.id])
                        + g.no_load_cost * online[g.id]) * dt
                da_c = (g.dispatch_cost(da_disp[g.id])
                        + g.no_load_cost * da_online[g.id]) * dt
                result.unit_incremental_cost[g.id][gq] = rt_c - da_c
                state.prev_p[g.id] = frag["dispatch"][g.id]
                state.prev_online[g.id] = online[g.id]
        if skip_rtc:
            result.rtc_production_cost[
                hour * per_hour:(hour + 1) * per_hour] = \
                result.rtd_production_cost[
                    hour * per_hour:(hour + 1) * per_hour]
    result.commit = {gid: arr.copy() for gid, arr in state.commit.items()}
    result.extra_commitment_cost = float(state.extra_startup_cost.sum()
                                         + state.extra_noload_cost.sum())
    resid = result.shed - result.over - actual_nl
    for g in system.generators:
        resid = resid + result.dispatch[g.id]
    result.max_balance_residual = float(np.abs(resid).max())
    return result


def export_rt_csv(result: RtResult, path: str) -> None:
    """Per (interval, unit) dispatch plus interval-level prices and slack."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["interval", "unit", "dispatch", "price", "shed",
                         "over", "reserve_slack"])
        Q = len(result.price)
        for q in range(Q):
            for gid in sorted(result.dispatch):
                writer.writerow([q, gid, f"{result.dispatch[gid][q]:.6f}",
                                 f"{result.price[q]:.6f}",
                                 f"{result.shed[q]:.6f}",
                                 f"{result.over[q]:.6f}",
                                 f"{result.reserve_slack[q]:.6f}"])


def export_simple_rt_csv(results: list["SimpleRtResult"], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "hour", "unit", "deploy_up",
                         "deploy_down", "eps_up", "eps_dn", "cost"])
        for res in results:
            T = len(res.eps_up)
            for t in range(T):
                for gid in sorted(res.p_plus):
                    writer.writerow([
                        res.scenario, t, gid, f"{res.p_plus[gid][t]:.6f}",
                        f"{res.p_minus[gid][t]:.6f}", f"{res.eps_up[t]:.6f}",
                        f"{res.eps_dn[t]:.6f}", f"{res.cost:.6f}"])


# -- simplified out-of-sample model ------------------------------------------

@dataclass
class SimpleRtResult:
    """One scenario's balancing outcome under the simplified RT model."""
    scenario: int
    p_plus: dict[str, np.ndarray]
    p_minus: dict[str, np.ndarray]
    eps_up: np.ndarray
    eps_dn: np.ndarray
    u_rt: dict[str, np.ndarray]
    u_rt_start: dict[str, np.ndarray]
    cost: float
    cost_terms: dict[str, float] = field(default_factory=dict)


def run_simple_rt(da: DaSolution, scenarios: ScenarioSet, system: SystemModel,
                  cfg: MarketConfig, nl_schedule: np.ndarray | None = None,
                  nl_key: str = "net_load", backend=None,
                  scenario_limit: int | None = None) -> list[SimpleRtResult]:
    """Balance each scenario's net-load error using only awarded capacity.

    Units move up at strike_up (offline fast award holders may start first,
    paying no-load plus incremental startup) and down at strike_down; any
    residual error lands on penalized slack. Missing awards simply mean zero
    flexibility, so the whole error is penalized.
    """
    backend = backend or get_backend()
    T = cfg.da_horizon
    products = system.reserve_products
    up = da.up_awards(products)
    dn = da.down_awards(products)
    if nl_schedule is None:
        if not da.buyer_p:
            raise ValueError("need nl_schedule when the solution has no "
                             "buyer schedules")
        nl_schedule = -sum(da.buyer_p.values())
    nl_schedule = np.asarray(nl_schedule, dtype=float)[:T]

    mat = scenarios.matrix(nl_key)
    if mat.shape[1] < T:
        raise ValueError("scenario horizon shorter than the DA horizon")
    count = mat.shape[0] if scenario_limit is None else min(
        scenario_limit, mat.shape[0])

    starter_ids = {g.id for g in system.fast_units()
                   if g.id in up and np.any(up[g.id] > 1e-9)
                   and np.any(da.commit[g.id] == 0)}
    units = sorted(set(up) | set(dn))

    results = []
    for s in range(count):
        err = mat[s, :T] - nl_schedule
        lin = LinearModel("simple_rt")
        for gid in units:
            fs = system.seller_params(gid)
            cap_up = up.get(gid, np.zeros(T))
            cap_dn = dn.get(gid, np.zeros(T))
            g = system.generator(gid)
            prev_urt = None
            for t in range(T):
                pp = lin.add_var("pp", (gid, t))
                pm = lin.add_var("pm", (gid, t), 0, float(cap_dn[t]))
                lin.add_obj(pp, fs.strike_up, "deploy_up")
                lin.add_obj(pm, -fs.strike_down, "deploy_down")
                uda = int(da.commit[gid][t])
                if gid in starter_ids:
                    urt = lin.add_var("u_rt", (gid, t), 0, 1 - uda,
                                      integer=True)
                    lin.add_obj(urt, g.no_load_cost, "rt_no_load")
                    lin.add_le({pp: 1.0, urt: -float(cap_up[t])},
                               float(cap_up[t]) * uda, "deploy_cap", (gid, t))
                    st = lin.add_var("u_start", (gid, t), 0, 1)
                    lin.add_obj(st, g.startup_cost, "rt_startup")
                    prior = {prev_urt: 1.0} if prev_urt is not None else {}
                    prev_u = int(da.commit[gid][t - 1]) if t else 0
                    lin.add_ge({st: 1.0, urt: -1.0, **prior},
                               float(uda - prev_u), "start_def", (gid, t))
                    lin.add_obj_const(
                        -g.startup_cost * float(da.startup[gid][t]),
                        "rt_startup")
                    prev_urt = urt
                else:
                    lin.add_le({pp: 1.0}, float(cap_up[t]) * uda,
                               "deploy_cap", (gid, t))
        for t in range(T):
            eu = lin.add_var("eps_up", (t,))
            ed = lin.add_var("eps_dn", (t,))
            lin.add_obj(eu, cfg.shortfall_penalty, "penalty")
            lin.add_obj(ed, -cfg.surplus_penalty, "penalty")
            coeffs = {eu: 1.0, ed: -1.0}
            for gid in units:
                coeffs[lin.var("pp", (gid, t))] = 1.0
                coeffs[lin.var("pm", (gid, t))] = -1.0
            lin.add_eq(coeffs, float(err[t]), "balance", (t,))

        res = backend.solve(lin, mip_gap=1e-9)
        if not res.optimal and res.status != "limit":
            raise RuntimeError(f"simple RT solve failed on scenario {s}")
        x = res.x
        results.append(SimpleRtResult(
            scenario=s,
            p_plus={gid: np.array([x[lin.var("pp", (gid, t))]
                                   for t in range(T)]) for gid in units},
            p_minus={gid: np.array([x[lin.var("pm", (gid, t))]
                                    for t in range(T)]) for gid in units},
            eps_up=np.array([x[lin.var("eps_up", (t,))] for t in range(T)]),
            eps_dn=np.array([x[lin.var("eps_dn", (t,))] for t in range(T)]),
            u_rt={gid: np.rint([x[lin.var("u_rt", (gid, t))]
                                for t in range(T)]).astype(int)
                  for gid in starter_ids},
            u_rt_start={gid: np.array([x[lin.var("u_start", (gid, t))]
                                       for t in range(T)])
                        for gid in starter_ids},
            cost=res.objective, cost_terms=lin.decompose(x)))
    return results
