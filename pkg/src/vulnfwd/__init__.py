"""Valuation of vulnerable equity forwards with funding, credit and wrong-way risk."""

from .analytic import (
    ForwardContract,
    QuadConfig,
    ValuationResult,
    atmrf_strike,
    bs_call_qhat,
    bs_put_qhat,
    hedge_units,
    mtm_risk_free,
    no_arbitrage_band,
    price_approx,
    price_atmrf,
    price_client,
    price_general,
)
from .exceptions import (
    DegenerateVariance,
    GridTooCoarse,
    NonLinearizingPolicy,
    NotAtmrf,
    NumericalError,
    QuadratureNonConvergence,
    ValidationError,
    VulnFwdError,
)
from .market import (
    DerivedRates,
    FundingPolicy,
    MarketParams,
    derive_rates,
    stock_default_correlation,
    validate_no_arbitrage,
)
from .montecarlo import McConfig, McEstimate, mc_correlation, mc_price_qhat, simulate_p_measure
from .pde import PdeGrid, solve_linear_pde
from .sensitivity import GridSpec, SweepSpec, risky_stock_forward, run_grid, run_sweep, tatm_strike
from .special import upsilon, upsilon0, upsilon_tilde

__version__ = "0.1.0"
