"""Domain types, the trading clock, return construction and noise-to-signal ratio.

All variances handled by the package are annualized and every elapsed time
fed to an estimator is expressed in years.  The conversion from session
seconds to years happens exactly once, in :func:`log_returns`.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateInput, InsufficientData, MalformedInput


@dataclass(frozen=True)
class TimeConvention:
    """Trading clock: a 6.5 hour session and 252 sessions per year."""

    seconds_per_day: float = 23_400.0
    days_per_year: float = 252.0

    @property
    def seconds_per_year(self) -> float:
        return self.seconds_per_day * self.days_per_year

    def seconds_to_years(self, seconds):
        return np.asarray(seconds, dtype=float) / self.seconds_per_year


DEFAULT_CONVENTION = TimeConvention()


def _as_readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TickSeries:
    """One stock-day of observed transaction log-prices.

    ``times`` are seconds since the session open.  ``prices`` optionally keeps
    the untransformed prices so that a series written back to disk round-trips
    bit for bit; when absent, ``exp(log_prices)`` is used.
    """

    symbol: str
    date: _dt.date
    times: np.ndarray
    log_prices: np.ndarray
    session_length: float = DEFAULT_CONVENTION.seconds_per_day
    prices: Optional[np.ndarray] = None

    def __post_init__(self):
        times = _as_readonly(self.times)
        logp = _as_readonly(self.log_prices)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "log_prices", logp)
        if self.prices is not None:
            prices = _as_readonly(self.prices)
            if prices.shape != logp.shape:
                raise MalformedInput("prices and log_prices differ in length")
            object.__setattr__(self, "prices", prices)
        if times.ndim != 1 or logp.ndim != 1 or times.shape != logp.shape:
            raise MalformedInput("times and log_prices must be 1-d and of equal length")
        if len(times) < 2:
            raise InsufficientData(f"need at least 2 ticks, got {len(times)}")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(logp))):
            raise MalformedInput("non-finite time or log-price")
        if not self.session_length > 0:
            raise MalformedInput("session_length must be positive")
        if np.any(np.diff(times) <= 0):
            raise MalformedInput("times must be strictly increasing")
        if times[0] < 0 or times[-1] > self.session_length:
            raise MalformedInput("times outside [0, session_length]")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def price_values(self) -> np.ndarray:
        return self.prices if self.prices is not None else np.exp(self.log_prices)

    def __eq__(self, other):
        if not isinstance(other, TickSeries):
            return NotImplemented
        return (
            self.symbol == other.symbol
            and self.date == other.date
            and self.session_length == other.session_length
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.log_prices, other.log_prices)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """Log-returns with their elapsed time in years."""

    returns: np.ndarray
    gaps: np.ndarray

    def __post_init__(self):
        r = _as_readonly(self.returns)
        g = _as_readonly(self.gaps)
        if r.ndim != 1 or r.shape != g.shape:
            raise MalformedInput("returns and gaps must be 1-d and of equal length")
        if len(r) and np.any(g <= 0):
            raise MalformedInput("gaps must be positive")
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "gaps", g)

    @classmethod
    def regular(cls, returns, delta: float) -> "ReturnSeries":
        """Equally spaced returns, ``delta`` years apart."""
        r = np.asarray(returns, dtype=float)
        return cls(r, np.full(r.shape, float(delta)))

    @property
    def n(self) -> int:
        return len(self.returns)

    @property
    def T_years(self) -> float:
        return float(np.sum(self.gaps))

    @property
    def mean_gap(self) -> float:
        return self.T_years / self.n


@dataclass(frozen=True)
class NoiseVolEstimate:
    """Estimated (sigma2, a2) for one stock-day from one estimator.

    ``sigma2`` is annualized; ``a2`` is in squared log-price units.  A TSRV
    estimate built with negative values allowed may carry ``sigma2 < 0`` and
    is then flagged with ``diagnostics['negative'] = True``.
    """

    sigma2: float
    a2: float
    nsr: float
    avar: Optional[np.ndarray]
    estimator_tag: str
    n_obs: int
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def sigma(self) -> float:
        return float(np.sqrt(max(self.sigma2, 0.0)))

    @property
    def a(self) -> float:
        return float(np.sqrt(self.a2))


def log_returns(ticks: TickSeries, conv: TimeConvention = DEFAULT_CONVENTION) -> ReturnSeries:
    """Consecutive log-price differences and their elapsed time in years."""
    times = np.asarray(ticks.times, dtype=float)
    logp = np.asarray(ticks.log_prices, dtype=float)
    if len(times) < 2:
        raise InsufficientData("need at least 2 ticks")
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise MalformedInput("times must be strictly increasing")
    return ReturnSeries(np.diff(logp), dt / conv.seconds_per_year)


def nsr(sigma2: float, a2: float, delta: float) -> float:
    """Share of the per-interval return variance due to noise, 2a²/(σ²Δ + 2a²)."""
    if sigma2 < 0 or a2 < 0:
        raise MalformedInput("sigma2 and a2 must be non-negative")
    if not delta > 0:
        raise MalformedInput("delta must be positive")
    total = sigma2 * delta + 2.0 * a2
    if total == 0:
        raise DegenerateInput("sigma2*delta + 2*a2 is zero")
    return 2.0 * a2 / total
