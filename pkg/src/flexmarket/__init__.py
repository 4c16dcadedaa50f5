"""Two-settlement electricity market simulation with flexibility options
and imbalance reserves."""

__version__ = "0.1.0"

from .system import (FlexSellerParams, Generator, MarketConfig,
                     ReserveProductDef, SystemModel, UncertainAccount,
                     derive_strike_prices, validate_system)

__all__ = [
    "FlexSellerParams", "Generator", "MarketConfig", "ReserveProductDef",
    "SystemModel", "UncertainAccount", "derive_strike_prices",
    "validate_system", "__version__",
]
