"""Formed-price models, order-flow metrics and the windowed regression pipeline."""

from .errors import (
    ConfigurationError, ConsistencyError, DataValidationError, DegenerateBVPError,
    DegenerateParameterError, DomainError, FlowPriceError, InvalidParameterError, MissingSeedError,
    UndefinedRatioError, UnderdeterminedError, UnsupportedKernelError, UnsupportedRegimeError,
)
from .grid import SampledPath, TimeGrid
from .mfg import (
    ModelParams, comparative_statics, compatibility_residual, constant_price_flow, formed_price,
    induced_order_flow, optimal_rate, solve_thetas, theta2_at, value_function,
)
from .finite_pop import (
    FinitePopParams, MicroKernel, convergence_errors, expected_formed_price, mean_inventory_bvp,
    permanent_impact_sanity,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ConsistencyError", "DataValidationError", "DegenerateBVPError",
    "DegenerateParameterError", "DomainError", "FlowPriceError", "InvalidParameterError",
    "MissingSeedError", "UndefinedRatioError", "UnderdeterminedError", "UnsupportedKernelError",
    "UnsupportedRegimeError", "SampledPath", "TimeGrid", "ModelParams", "comparative_statics",
    "compatibility_residual", "constant_price_flow", "formed_price", "induced_order_flow",
    "optimal_rate", "solve_thetas", "theta2_at", "value_function", "FinitePopParams", "MicroKernel",
    "convergence_errors", "expected_formed_price", "mean_inventory_bvp", "permanent_impact_sanity",
]
