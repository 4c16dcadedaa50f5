"""Built-in desk-scale benchmark systems and profile shapes.

The desk system keeps the proportions of a large thermal fleet: DA-only to
fast-start capacity near 61:8 and wind to solar near 26:2, with a supply
curve that is steep at both ends. Everything is formulaic, so two builds of
the same configuration are identical.
"""

from __future__ import annotations

import numpy as np

from .system import (FAST_START, Generator, MarketConfig, SystemModel,
                     UncertainAccount, default_ir_products)

DESK_THERMAL_MW = 690.0          # 610 DA-only + 80 fast
DESK_WIND_MW = 260.0
DESK_SOLAR_MW = 20.0


def _cost_level(frac: float) -> float:
    """Supply-curve shape: steep head and tail, gentle middle."""
    return 12.0 + 55.0 * frac + 10.0 * frac ** 6 * 20.0 + 6.0 * (1 - frac) ** 8 * 10.0


def desk_system(da_units: int = 26, fast_units: int = 4,
                config: MarketConfig | None = None) -> SystemModel:
    """A desk-scale test system preserving the reference capacity ratios."""
    cfg = config or MarketConfig()
    gens: list[Generator] = []
    da_cap = DESK_THERMAL_MW * 61.0 / 69.0
    fast_cap = DESK_THERMAL_MW * 8.0 / 69.0

    for i in range(da_units):
        frac = i / max(da_units - 1, 1)
        p_max = round(da_cap / da_units * (0.6 + 0.8 * frac), 1)
        mc_lo = round(_cost_level(frac) * 0.9, 2)
        mc_hi = round(_cost_level(frac) * 1.25 + 4.0, 2)
        seg1 = round(p_max * 0.6, 1)
        gens.append(Generator(
            id=f"da{i:02d}", p_min=round(p_max * 0.35, 1), p_max=p_max,
            ramp_rate=round(p_max * (0.35 + 0.4 * frac), 1),
            min_up_time=3 if frac < 0.4 else 2,
            min_down_time=2,
            startup_cost=round(260.0 + 90.0 * (1 - frac) * p_max / 10, 0),
            no_load_cost=round(18.0 + 0.6 * p_max, 1),
            cost_curve=((seg1, mc_lo), (round(p_max - seg1, 1), mc_hi)),
        ))
    for i in range(fast_units):
        frac = i / max(fast_units - 1, 1)
        p_max = round(fast_cap / fast_units, 1)
        mc_lo = round(55.0 + 30.0 * frac, 2)
        mc_hi = round(80.0 + 45.0 * frac, 2)
        seg1 = round(p_max * 0.5, 1)
        gens.append(Generator(
            id=f"fs{i:02d}", p_min=round(p_max * 0.2, 1), p_max=p_max,
            ramp_rate=p_max, min_up_time=1, min_down_time=1,
            startup_cost=140.0 + 25.0 * i, no_load_cost=9.0 + 2.0 * i,
            cost_curve=((seg1, mc_lo), (round(p_max - seg1, 1), mc_hi)),
            commit_class=FAST_START, start_lead_time=30.0,
        ))

    accounts = [
        UncertainAccount(id="load", constituent="load", scenario_key="load"),
        UncertainAccount(id="wind", constituent="wind", scenario_key="wind"),
        UncertainAccount(id="solar", constituent="solar",
                         scenario_key="solar"),
    ]
    return SystemModel(generators=gens, accounts=accounts,
                       reserve_products=default_ir_products(cfg), config=cfg)


def small_system(config: MarketConfig | None = None) -> SystemModel:
    """A compact variant for fast randomized sweeps; same ratio discipline."""
    return desk_system(da_units=8, fast_units=2, config=config)


def desk_profiles(horizon: int = 24) -> dict[str, np.ndarray]:
    """Smooth daily shapes: evening-peaking load, windy night, midday sun."""
    t = np.arange(horizon)
    load = 470.0 + 130.0 * np.sin((t - 6.0) * np.pi / 12.0) \
        + 45.0 * np.sin((t - 16.0) * np.pi / 6.0)
    wind = DESK_WIND_MW * (0.45 + 0.25 * np.cos((t - 2.0) * np.pi / 12.0))
    solar = np.clip(np.sin((t - 6.0) * np.pi / 12.0), 0.0, None) ** 2 \
        * DESK_SOLAR_MW
    return {"load": load, "wind": wind, "solar": solar}


BUILTIN_SYSTEMS = {
    "desk": desk_system,
    "small": small_system,
}


def resolve_system(spec: str) -> SystemModel:
    """Resolve ``builtin:<name>`` specs or load from a TOML path."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        try:
            return BUILTIN_SYSTEMS[name]()
        except KeyError:
            raise ValueError(f"unknown builtin system '{name}'; "
                             f"available: {sorted(BUILTIN_SYSTEMS)}") from None
    from .system import load_system
    return load_system(spec)
