"""Stochastic-volatility (optionally with jumps) price paths observed with
i.i.d. Gaussian noise at exponentially spaced times.

Each path draws from its own counter-based random streams keyed by
``(seed, cell_index, path_index, tag)``, so a path is reproducible bit for
bit regardless of execution order or thread count.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import DEFAULT_CONVENTION, TickSeries, TimeConvention
from .errors import MalformedInput

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        def wrap(func):
            return func
        return wrap(args[0]) if args and callable(args[0]) else wrap


# substream tags; order is part of the reproducibility contract
_TAGS = {"times": 0, "v0": 1, "w1": 2, "w2": 3, "jump_x": 4, "jump_v": 5, "noise": 6}


@dataclass(frozen=True)
class SimConfig:
    kappa: float = 5.0
    v_bar: float = 0.1
    s: float = 0.5
    a: float = 0.001
    lam: float = 0.0
    jump_x_sd: float = 0.02
    jump_v_logmean: float = -5.0
    jump_v_logsd: float = 1.0
    delta_bar_seconds: float = 1.0
    T_years: float = 1.0 / 252.0
    seed: int = 0
    # None draws V0 from the stationary Gamma law
    v0: Optional[float] = None
    x0: float = math.log(100.0)

    def __post_init__(self):
        for name in ("kappa", "v_bar", "delta_bar_seconds", "T_years"):
            if not getattr(self, name) > 0:
                raise MalformedInput(f"{name} must be positive")
        for name in ("s", "a", "lam", "jump_x_sd", "jump_v_logsd"):
            if not getattr(self, name) >= 0:
                raise MalformedInput(f"{name} must be non-negative")
        if self.v0 is not None and self.v0 < 0:
            raise MalformedInput("v0 must be non-negative")


@dataclass(frozen=True, eq=False)
class SimPath:
    ticks: TickSeries
    x_true: np.ndarray
    v_path: np.ndarray
    realized_qv: float
    qv_cum: np.ndarray
    jump_times_x: np.ndarray = field(default_factory=lambda: np.empty(0))
    jump_times_v: np.ndarray = field(default_factory=lambda: np.empty(0))


class PathStreams:
    """Independent generators for one path, one per named substream."""

    def __init__(self, seed: int, cell_index: int = 0, path_index: int = 0):
        self.key = (int(seed), int(cell_index), int(path_index))

    def rng(self, tag: str) -> np.random.Generator:
        seed, cell, path = self.key
        ss = np.random.SeedSequence(seed, spawn_key=(cell, path, _TAGS[tag]))
        return np.random.Generator(np.random.Philox(ss))


def sample_times(delta_bar_seconds: float, T_years: float,
                 conv: TimeConvention = DEFAULT_CONVENTION, rng=None) -> np.ndarray:
    """Observation times in seconds: 0 followed by exponential arrivals
    with mean ``delta_bar_seconds``, truncated at the session end."""
    if not delta_bar_seconds > 0:
        raise MalformedInput("delta_bar_seconds must be positive")
    rng = np.random.default_rng() if rng is None else rng
    horizon = T_years * conv.seconds_per_year
    expected = horizon / delta_bar_seconds
    chunk = int(expected + 10.0 * math.sqrt(expected) + 16)
    pieces = []
    last = 0.0
    while True:
        arr = last + np.cumsum(rng.standard_exponential(chunk) * delta_bar_seconds)
        pieces.append(arr)
        last = arr[-1]
        if last > horizon:
            break
    t = np.concatenate([[0.0]] + pieces)
    t = t[t <= horizon]
    keep = np.concatenate([[True], np.diff(t) > 0])
    return t[keep]


def stationary_v0(cfg: SimConfig, rng: np.random.Generator) -> float:
    """Draw from the Gamma stationary law of the square-root variance."""
    if cfg.s == 0:
        return cfg.v_bar
    shape = 2.0 * cfg.kappa * cfg.v_bar / cfg.s**2
    scale = cfg.s**2 / (2.0 * cfg.kappa)
    return float(rng.gamma(shape, scale))


@njit(cache=False, nogil=True)
def _euler(dt, z1, z2, jx, jv, x0, v0, kappa, vbar, s):
    n = dt.shape[0]
    x = np.empty(n + 1)
    v = np.empty(n + 1)
    qv = np.empty(n + 1)
    x[0] = x0
    v[0] = v0
    qv[0] = 0.0
    vhat = v0
    for i in range(n):
        vp = vhat if vhat > 0.0 else 0.0
        sd = math.sqrt(vp * dt[i])
        x[i + 1] = x[i] + sd * z1[i] + jx[i]
        vhat = vhat + kappa * (vbar - vp) * dt[i] + s * sd * z2[i]
        if jv[i] != 1.0 and vhat > 0.0:
            vhat = vhat * jv[i]
        v[i + 1] = vhat if vhat > 0.0 else 0.0
        qv[i + 1] = qv[i] + vp * dt[i]
    return x, v, qv


def _poisson_times(lam: float, T: float, rng: np.random.Generator) -> np.ndarray:
    if lam <= 0:
        return np.empty(0)
    count = rng.poisson(lam * T)
    return np.sort(rng.uniform(0.0, T, size=count))


def observe_with_noise(x_true, a: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. N(0, a²) observation error to the efficient log-prices."""
    if a < 0:
        raise MalformedInput("a must be non-negative")
    x = np.asarray(x_true, dtype=float)
    eps = rng.standard_normal(x.shape)
    return x + a * eps


def simulate_svj(config: SimConfig, times, streams: Optional[PathStreams] = None,
                 conv: TimeConvention = DEFAULT_CONVENTION,
                 symbol: str = "SIM", date: _dt.date = _dt.date(2000, 1, 3)) -> SimPath:
    """Euler path of the jump model at the given observation times (seconds).

    Price jumps N(0, jump_x_sd²) are added at the first observation at or
    after each event; a volatility event multiplies V by ``1 + exp(z)``.
    Jumps after the last observation are recorded but unobserved.
    """
    streams = PathStreams(config.seed) if streams is None else streams
    t_sec = np.asarray(times, dtype=float)
    t_yr = t_sec / conv.seconds_per_year
    dt = np.diff(t_yr)
    n = len(dt)

    v0 = config.v0 if config.v0 is not None else stationary_v0(config, streams.rng("v0"))
    z1 = streams.rng("w1").standard_normal(n)
    z2 = streams.rng("w2").standard_normal(n)

    jx = np.zeros(n)
    jv = np.ones(n)
    g = streams.rng("jump_x")
    tx = _poisson_times(config.lam, config.T_years, g)
    sizes_x = g.normal(0.0, config.jump_x_sd, size=len(tx))
    g = streams.rng("jump_v")
    tv = _poisson_times(config.lam, config.T_years, g)
    sizes_v = np.exp(g.normal(config.jump_v_logmean, config.jump_v_logsd, size=len(tv)))
    if n:
        ix = np.searchsorted(t_yr, tx, side="left") - 1
        ok = (ix >= 0) & (ix < n)
        np.add.at(jx, ix[ok], sizes_x[ok])
        iv = np.searchsorted(t_yr, tv, side="left") - 1
        ok = (iv >= 0) & (iv < n)
        np.multiply.at(jv, iv[ok], 1.0 + sizes_v[ok])

    x, v, qv = _euler(dt, z1, z2, jx, jv, float(config.x0), float(v0),
                      float(config.kappa), float(config.v_bar), float(config.s))
    y = observe_with_noise(x, config.a, streams.rng("noise"))
    ticks = TickSeries(symbol, date, t_sec, y,
                       session_length=config.T_years * conv.seconds_per_year)
    return SimPath(ticks=ticks, x_true=x, v_path=v, realized_qv=float(qv[-1]), qv_cum=qv,
                   jump_times_x=tx, jump_times_v=tv)


def simulate_sv(config: SimConfig, times, streams: Optional[PathStreams] = None,
                conv: TimeConvention = DEFAULT_CONVENTION, **kw) -> SimPath:
    """Heston-type path without jumps; ``config.lam`` is ignored."""
    return simulate_svj(replace(config, lam=0.0), times, streams, conv, **kw)


def simulate_path(config: SimConfig, cell_index: int = 0, path_index: int = 0,
                  conv: TimeConvention = DEFAULT_CONVENTION, **kw) -> SimPath:
    """Draw sampling times and a full path from the streams of one path index."""
    streams = PathStreams(config.seed, cell_index, path_index)
    times = sample_times(config.delta_bar_seconds, config.T_years, conv, streams.rng("times"))
    return simulate_svj(config, times, streams, conv, **kw)
