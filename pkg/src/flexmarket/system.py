"""Physical and financial data model of the test system.

Sign convention used throughout the package: every market participant is
described by its net injection in MW. Generators inject positive power; load
accounts carry negative availability so one set of hedging equations serves
load, wind, solar and aggregate net-load accounts alike.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DA_ONLY = "da_only"
FAST_START = "fast_start"
COMMIT_CLASSES = (DA_ONLY, FAST_START)

CONSTITUENTS = ("load", "wind", "solar", "aggregate")
# Constituents whose injection may be negative (consumption-dominated).
NEGATIVE_INJECTION = ("load", "aggregate")

ACCOUNT_MODES = ("single_aggregate", "per_constituent")


@dataclass(frozen=True)
class Generator:
    """A dispatchable unit with a convex piecewise-linear cost curve.

    cost_curve is an ordered list of (segment width MW, marginal cost $/MWh)
    covering output from zero to p_max; marginal costs must be non-decreasing
    and the widths must sum to p_max.
    """
    id: str
    p_min: float
    p_max: float
    ramp_rate: float            # MW per hour
    min_up_time: int = 1        # hours
    min_down_time: int = 1      # hours
    startup_cost: float = 0.0
    no_load_cost: float = 0.0
    cost_curve: tuple[tuple[float, float], ...] = ()
    commit_class: str = DA_ONLY
    start_lead_time: float = 60.0   # minutes, fast_start units only

    @property
    def is_fast(self) -> bool:
        return self.commit_class == FAST_START

    def marginal_costs(self) -> list[float]:
        return [mc for _, mc in self.cost_curve]

    def dispatch_cost(self, p: float) -> float:
        """$/h production cost at output p, excluding no-load cost."""
        cost, remaining = 0.0, max(p, 0.0)
        for width, mc in self.cost_curve:
            take = min(remaining, width)
            cost += take * mc
            remaining -= take
            if remaining <= 0:
                break
        return cost

    def offline_up_cap(self, window_minutes: float = 60.0) -> float:
        """Upward MW reachable within a window after an offline start."""
        spare = max(0.0, window_minutes - self.start_lead_time)
        return min(self.p_max, self.p_min + self.ramp_rate * spare / 60.0)


@dataclass(frozen=True)
class FlexSellerParams:
    """Strike prices a flexibility seller commits to for RT deployment."""
    generator_id: str
    strike_up: float        # $/MWh for incremental RT energy
    strike_down: float      # $/MWh for decremental RT energy
    capacity_bid: float = 0.0   # $/MW, optional DA reservation cost


@dataclass(frozen=True)
class UncertainAccount:
    """A participant exposed to DA-to-RT imbalances (load, wind, solar)."""
    id: str
    constituent: str
    da_cost: float = 0.0                 # $/MWh variable cost in DA offers
    self_hedge_cost_up: float = 225.0    # $/MWh scarcity cost of self-hedging up
    self_hedge_cost_down: float = 0.0
    scenario_key: str = ""               # column in the scenario set

    @property
    def allows_negative_injection(self) -> bool:
        return self.constituent in NEGATIVE_INJECTION

    def __post_init__(self):
        if not self.scenario_key:
            object.__setattr__(self, "scenario_key", self.id)


@dataclass(frozen=True)
class ReserveProductDef:
    """A reserve product procured against a stepped scarcity-priced curve.

    demand_steps: ordered ((pct_lo, pct_hi), scarcity price $/MW); each step's
    quantity is the width of that prediction interval of forecast net load.
    Products with a higher cascade_rank may fill the requirements of
    lower-ranked products in the same direction.
    """
    name: str
    direction: str                       # "up" | "down"
    response_time: float = 60.0          # minutes
    demand_steps: tuple[tuple[tuple[float, float], float], ...] = ()
    cascade_rank: int = 1
    beta: float | None = None            # ramp-reservation factor
    defaulted_prices: bool = False       # True when prices were not user-set

    @property
    def ramp_factor(self) -> float:
        # A 60-minute product reserves its full award of hourly ramp.
        return self.beta if self.beta is not None else self.response_time / 60.0


@dataclass(frozen=True)
class MarketConfig:
    """Market timing, tier percentiles and penalty configuration."""
    da_resolution: float = 1.0           # hours
    da_horizon: int = 24                 # hours
    rtc_lead: float = 1.0                # hours
    rtc_horizon: float = 3.0             # hours
    rt_resolution: float = 0.25          # hours (15 minutes)
    tier_percentiles: tuple[float, ...] = (5, 10, 20, 35, 50, 65, 80, 90, 95)
    fo_penalty_m: float = 2.8            # $/MW on the option-volume tie-breaker
    mip_gap: float = 0.005
    rt_reserve_requirement: float = 0.0  # MW held in RT dispatch
    rt_spin_scarcity: float = 4500.0     # $/MWh RT reserve shortfall price
    shortfall_penalty: float = 9000.0    # $/MWh unserved energy
    surplus_penalty: float = -250.0      # $/MWh overgeneration (negative)
    fo_account_mode: str = "single_aggregate"

    @property
    def rt_per_hour(self) -> int:
        return round(1.0 / self.rt_resolution)

    @property
    def rt_intervals(self) -> int:
        return round(self.da_horizon / self.rt_resolution)


@dataclass
class SystemModel:
    """Complete system definition: units, uncertain accounts, products."""
    generators: list[Generator]
    accounts: list[UncertainAccount] = field(default_factory=list)
    flex_sellers: dict[str, FlexSellerParams] = field(default_factory=dict)
    reserve_products: list[ReserveProductDef] = field(default_factory=list)
    config: MarketConfig = field(default_factory=MarketConfig)

    def generator(self, gen_id: str) -> Generator:
        for g in self.generators:
            if g.id == gen_id:
                return g
        raise KeyError(gen_id)

    def seller_params(self, gen_id: str) -> FlexSellerParams:
        """Explicit seller parameters, or strikes derived from the cost curve."""
        if gen_id in self.flex_sellers:
            return self.flex_sellers[gen_id]
        return derive_strike_prices(self.generator(gen_id))

    def fast_units(self) -> list[Generator]:
        return [g for g in self.generators if g.is_fast]

    def da_only_units(self) -> list[Generator]:
        return [g for g in self.generators if not g.is_fast]

    def total_capacity(self) -> float:
        return sum(g.p_max for g in self.generators)


@dataclass(frozen=True)
class Violation:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


def derive_strike_prices(gen: Generator) -> FlexSellerParams:
    """Default strikes: the highest and lowest marginal cost of the DA curve."""
    if not gen.cost_curve:
        raise ValueError(f"generator {gen.id}: cost curve is empty")
    costs = gen.marginal_costs()
    return FlexSellerParams(generator_id=gen.id,
                            strike_up=max(costs), strike_down=min(costs))


def validate_system(model: SystemModel,
                    levels: dict[str, np.ndarray] | None = None
                    ) -> list[Violation]:
    """Collect every violated invariant; an empty list means well-formed.

    ``levels`` optionally maps account ids to (hours x scenario levels)
    availability arrays so scenario monotonicity can be checked too.
    """
    out: list[Violation] = []
    cfg = model.config
    seen: set[str] = set()
    for g in model.generators:
        loc = f"generator {g.id}"
        if g.id in seen:
            out.append(Violation(loc, "duplicate id"))
        seen.add(g.id)
        if not (0 <= g.p_min <= g.p_max):
            out.append(Violation(loc, f"requires 0 <= p_min <= p_max, "
                                      f"got ({g.p_min}, {g.p_max})"))
        if not g.cost_curve:
            out.append(Violation(loc, "cost curve is empty"))
        else:
            costs = g.marginal_costs()
            if any(b < a for a, b in zip(costs, costs[1:])):
                out.append(Violation(loc, "marginal costs decrease along curve"))
            width = sum(w for w, _ in g.cost_curve)
            if abs(width - g.p_max) > 1e-6:
                out.append(Violation(
                    loc, f"segment widths sum to {width}, expected {g.p_max}"))
        if g.commit_class not in COMMIT_CLASSES:
            out.append(Violation(loc, f"unknown commit class {g.commit_class!r}"))
        if g.is_fast and g.start_lead_time > cfg.rtc_lead * 60.0 + 1e-9:
            out.append(Violation(
                loc, f"start lead {g.start_lead_time} min exceeds the "
                     f"{cfg.rtc_lead * 60.0:.0f} min RT commitment lead"))
        if g.ramp_rate < 0:
            out.append(Violation(loc, "negative ramp rate"))

    for gid, fp in model.flex_sellers.items():
        loc = f"seller {gid}"
        if gid != fp.generator_id:
            out.append(Violation(loc, "key does not match generator_id"))
        if all(g.id != gid for g in model.generators):
            out.append(Violation(loc, "references unknown generator"))
        if fp.strike_down > fp.strike_up:
            out.append(Violation(loc, f"strike_down {fp.strike_down} above "
                                      f"strike_up {fp.strike_up}"))

    seen = set()
    for acc in model.accounts:
        loc = f"account {acc.id}"
        if acc.id in seen:
            out.append(Violation(loc, "duplicate id"))
        seen.add(acc.id)
        if acc.constituent not in CONSTITUENTS:
            out.append(Violation(loc, f"unknown constituent {acc.constituent!r}"))
        if levels and acc.id in levels:
            lv = np.asarray(levels[acc.id])
            bad = np.argwhere(np.diff(lv, axis=1) < -1e-9)
            for t, s in bad[:10]:
                out.append(Violation(
                    loc, f"availability levels not ascending at hour {t}, "
                         f"level {s + 1} -> {s + 2}"))

    for prod in model.reserve_products:
        loc = f"product {prod.name}"
        if prod.direction not in ("up", "down"):
            out.append(Violation(loc, f"unknown direction {prod.direction!r}"))
        prices = [p for _, p in prod.demand_steps]
        if any(b >= a for a, b in zip(prices, prices[1:])):
            out.append(Violation(loc, "scarcity prices must strictly decrease "
                                      "along demand steps"))
        if prod.ramp_factor < 0:
            out.append(Violation(loc, "negative ramp factor"))
        for (lo, hi), _ in prod.demand_steps:
            if lo not in cfg.tier_percentiles or hi not in cfg.tier_percentiles:
                out.append(Violation(
                    loc, f"step ({lo},{hi}) not aligned with tier percentiles"))

    pcts = cfg.tier_percentiles
    if any(b <= a for a, b in zip(pcts, pcts[1:])) or any(
            not 0 < p < 100 for p in pcts):
        out.append(Violation("market config",
                             "tier percentiles must be strictly increasing "
                             "within (0, 100)"))
    if cfg.mip_gap < 0:
        out.append(Violation("market config", "mip_gap must be >= 0"))
    if cfg.fo_account_mode not in ACCOUNT_MODES:
        out.append(Violation("market config",
                             f"unknown fo_account_mode {cfg.fo_account_mode!r}"))
    return out


# Scarcity prices quoted for the first two up steps; the remaining steps and
# the whole down curve default to a declining continuation and are flagged.
_QUOTED_STEP_PRICES = (1200.0, 1000.0)
_DEFAULT_CONTINUATION = (800.0, 600.0, 450.0, 350.0, 275.0, 225.0)


def default_ir_products(cfg: MarketConfig) -> list[ReserveProductDef]:
    """Build the up/down imbalance-reserve pair from the tier percentiles.

    Up steps cover prediction intervals above the median, down steps below;
    prices beyond the two configured up steps are package defaults and the
    products are flagged accordingly so reports can call them out.
    """
    pcts = list(cfg.tier_percentiles)
    if 50 not in pcts:
        raise ValueError("tier percentiles must include the median (50)")
    mid = pcts.index(50)
    up_pairs = [(pcts[i], pcts[i + 1]) for i in range(mid, len(pcts) - 1)]
    down_pairs = [(pcts[i - 1], pcts[i]) for i in range(mid, 0, -1)]
    prices = _QUOTED_STEP_PRICES + _DEFAULT_CONTINUATION

    def steps(pairs):
        if len(pairs) > len(prices):
            raise ValueError("more demand steps than available default prices")
        return tuple((pair, prices[i]) for i, pair in enumerate(pairs))

    return [
        ReserveProductDef(name="ir_up", direction="up",
                          demand_steps=steps(up_pairs), cascade_rank=1,
                          defaulted_prices=len(up_pairs) > 2),
        ReserveProductDef(name="ir_down", direction="down",
                          demand_steps=steps(down_pairs), cascade_rank=1,
                          defaulted_prices=True),
    ]


# -- configuration file ----------------------------------------------------

def load_system(path: str) -> SystemModel:
    """Read a system definition from a TOML document.

    Layout: a [market] table, [[generators]] with optional inline
    [generators.flex] strike overrides, [[accounts]] and optional
    [[reserve_products]] (defaults are derived from the market config when
    absent). All quantities are MW, MWh, $ and hours unless noted.
    """
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return system_from_dict(doc)


def system_from_dict(doc: dict) -> SystemModel:
    cfg_raw = dict(doc.get("market", {}))
    for key in ("tier_percentiles",):
        if key in cfg_raw:
            cfg_raw[key] = tuple(cfg_raw[key])
    cfg = MarketConfig(**cfg_raw)

    generators = []
    sellers: dict[str, FlexSellerParams] = {}
    for raw in doc.get("generators", []):
        raw = dict(raw)
        flex = raw.pop("flex", None)
        raw["cost_curve"] = tuple((float(w), float(c))
                                  for w, c in raw.get("cost_curve", ()))
        gen = Generator(**raw)
        generators.append(gen)
        if flex is not None:
            sellers[gen.id] = FlexSellerParams(generator_id=gen.id, **flex)

    accounts = [UncertainAccount(**dict(raw)) for raw in doc.get("accounts", [])]

    products = []
    for raw in doc.get("reserve_products", []):
        raw = dict(raw)
        if "demand_steps" in raw:
            raw["demand_steps"] = tuple(
                ((float(lo), float(hi)), float(price))
                for (lo, hi), price in raw["demand_steps"])
        products.append(ReserveProductDef(**raw))
    if not products and doc.get("use_default_ir", True):
        products = default_ir_products(cfg)

    return SystemModel(generators=generators, accounts=accounts,
                       flex_sellers=sellers, reserve_products=products,
                       config=cfg)
