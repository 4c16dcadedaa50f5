import numpy as np
import pytest

from flexmarket.scenarios import PercentileTable, TierStructure
from flexmarket.system import (FlexSellerParams, Generator, MarketConfig,
                               SystemModel, UncertainAccount)


@pytest.fixture
def single_unit_system():
    cfg = MarketConfig(tier_percentiles=(5.0, 50.0, 95.0))
    gen = Generator(id="g1", p_min=0.0, p_max=100.0, ramp_rate=100.0,
                    startup_cost=0.0, no_load_cost=5.0,
                    cost_curve=((100.0, 20.0),))
    return SystemModel(generators=[gen], config=cfg, reserve_products=[])


@pytest.fixture
def flat_forecast():
    demand = np.full(24, 50.0)
    return PercentileTable("net_load", (5.0, 50.0, 95.0),
                           np.column_stack([demand - 10, demand, demand + 10]))


def make_three_level_fo_instance(strike_up=50.0, strike_down=10.0,
                                 levels=(40.0, 50.0, 60.0), horizon=24,
                                 demand=100.0, mc=20.0):
    """One generator, one wind buyer with three availability levels."""
    cfg = MarketConfig(tier_percentiles=(5.0, 50.0, 95.0), da_horizon=horizon)
    gen = Generator(id="g1", p_min=0.0, p_max=200.0, ramp_rate=200.0,
                    startup_cost=0.0, no_load_cost=0.0,
                    cost_curve=((200.0, mc),))
    buyer = UncertainAccount(id="w", constituent="wind", scenario_key="w",
                             self_hedge_cost_up=225.0, self_hedge_cost_down=0.0)
    system = SystemModel(generators=[gen], accounts=[buyer], config=cfg,
                         reserve_products=[])
    d = np.full(horizon, demand)
    table = PercentileTable("net_load", (5.0, 50.0, 95.0),
                            np.column_stack([d - 20, d, d + 20]))
    lv = np.tile(np.array(levels, dtype=float), (horizon, 1))
    tiers = TierStructure((5.0, 50.0, 95.0), {"w": lv},
                          prob_up=np.array([0.05, 0.50]),
                          prob_down=np.array([0.50, 0.05]))
    sellers = [FlexSellerParams(generator_id="g1", strike_up=strike_up,
                                strike_down=strike_down)]
    system.flex_sellers["g1"] = sellers[0]
    return system, table, tiers, sellers, buyer
