"""Stochastic volatility with multiplicative and additive variance noise.

The variance follows dv = -gamma (v - theta) dt + sqrt(kappa_M^2 v^2 + kappa_H^2 v) dW.
Its stationary law is Beta Prime (inverse gamma and gamma in the pure
multiplicative and pure additive limits), and returns are normal mixtures over
that law.
"""

__version__ = "0.1.0"

from .calibration import (
    FitResult,
    GammaFit,
    empirical_variance_moments,
    fit_gamma_from_autocov,
    fit_returns,
    kappas_from_fit,
    ks_statistic,
)
from .data_io import PriceSeries, ReturnSeries, load_prices, make_returns, write_results
from .distributions import (
    BetaPrimeParams,
    GammaParams,
    InverseGammaParams,
    Model,
    ModelParams,
    bp_from_model,
    model_from_bp,
    steady_state,
    stratonovich_to_ito,
)
from .errors import (
    ConvergenceError,
    DataFormatError,
    DegenerateDataError,
    DegenerateModelError,
    DomainError,
    InsufficientDataError,
    MHMError,
    MomentNotFiniteError,
    SimulationOverflowError,
)
from .realized import f_gamma_t, loglog_slopes, rv_series, rv_variance_ratio_curve
from .returns_density import ReturnDensitySpec, ReturnMixture, mhm_return_pdf, pd_return_pdf, return_cdf
from .sde import SimConfig, SimPath, returns_at_lag, simulate
from .special import QuadratureConfig, kummer_u

__all__ = [
    "__version__",
    "FitResult", "GammaFit", "empirical_variance_moments", "fit_gamma_from_autocov", "fit_returns",
    "kappas_from_fit", "ks_statistic",
    "PriceSeries", "ReturnSeries", "load_prices", "make_returns", "write_results",
    "BetaPrimeParams", "GammaParams", "InverseGammaParams", "Model", "ModelParams", "bp_from_model",
    "model_from_bp", "steady_state", "stratonovich_to_ito",
    "ConvergenceError", "DataFormatError", "DegenerateDataError", "DegenerateModelError", "DomainError",
    "InsufficientDataError", "MHMError", "MomentNotFiniteError", "SimulationOverflowError",
    "f_gamma_t", "loglog_slopes", "rv_series", "rv_variance_ratio_curve",
    "ReturnDensitySpec", "ReturnMixture", "mhm_return_pdf", "pd_return_pdf", "return_cdf",
    "SimConfig", "SimPath", "returns_at_lag", "simulate",
    "QuadratureConfig", "kummer_u",
]
