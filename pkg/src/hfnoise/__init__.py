"""Volatility and microstructure-noise estimation from high-frequency prices.

Maximum likelihood under an MA(1) return model, two-scales realized
volatility, a stochastic-volatility simulator with jumps, a Monte Carlo
harness and panel statistics for daily estimates.
"""

from .core import (DEFAULT_CONVENTION, NoiseVolEstimate, ReturnSeries, TickSeries,
                   TimeConvention, log_returns, nsr)
from .errors import HfNoiseError
from .mle import MleFitOptions, fit_mle
from .tsrv import TsrvOptions, fit_tsrv, tsrv

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CONVENTION", "NoiseVolEstimate", "ReturnSeries", "TickSeries", "TimeConvention",
    "log_returns", "nsr", "HfNoiseError", "MleFitOptions", "fit_mle", "TsrvOptions",
    "fit_tsrv", "tsrv", "__version__",
]
