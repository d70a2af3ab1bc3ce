"""Realized variance, subgrid averaging and the two-scales estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import NoiseVolEstimate, nsr as _nsr
from .errors import InsufficientData, InvalidOptions, MalformedInput


@dataclass(frozen=True)
class TsrvOptions:
    k: int = 25
    adjust: bool = True
    # when False the quadratic-variation estimate is clamped at zero
    allow_negative: bool = True

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidOptions("k must be an integer >= 1")


class TsrvResult(NamedTuple):
    qv: float
    noise_var: float

    @property
    def negative(self) -> bool:
        return self.qv < 0


def _prices(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise MalformedInput("log-price vector must be 1-d")
    return y


def rv_all(y) -> float:
    """Sum of squared consecutive differences over every observation."""
    y = _prices(y)
    if len(y) < 2:
        raise InsufficientData("need at least 2 prices")
    d = np.diff(y)
    return float(np.dot(d, d))


def rv_subgrid(y, start: int, K: int) -> float:
    """Realized variance on the sparse grid ``start, start+K, start+2K, ...``."""
    if K < 1 or not 0 <= start < K:
        raise InvalidOptions("need K >= 1 and 0 <= start < K")
    sub = _prices(y)[start::K]
    if len(sub) < 2:
        raise InsufficientData(f"subgrid starting at {start} has fewer than 2 points")
    d = np.diff(sub)
    return float(np.dot(d, d))


def rv_avg(y, K: int) -> float:
    """Average of the K offset subgrid realized variances."""
    # offsets summed in index order so the result does not depend on scheduling
    vals = [rv_subgrid(y, k, K) for k in range(K)]
    return float(math.fsum(vals) / K)


def noise_var_hat(y) -> float:
    """Noise variance implied by full-frequency RV: [Y,Y]_all / (2n)."""
    y = _prices(y)
    return rv_all(y) / (2.0 * (len(y) - 1))


def tsrv(y, opts: TsrvOptions = TsrvOptions()) -> TsrvResult:
    """Two-scales quadratic variation with its noise-variance companion.

    ``nbar = (n - K + 1)/K`` is the average number of returns per subgrid.
    With ``adjust`` the estimate is divided by ``1 - nbar/n``.
    """
    y = _prices(y)
    n = len(y) - 1
    K = int(opts.k)
    if K == 1 and opts.adjust:
        raise InvalidOptions("K = 1 leaves no slow time scale; the adjustment is 0/0")
    if n < K + 1:
        raise InsufficientData(f"need n >= K+1 = {K + 1} returns, got {n}")
    nbar = (n - K + 1) / K
    fast = rv_all(y)
    qv = rv_avg(y, K) - (nbar / n) * fast
    if opts.adjust:
        qv /= 1.0 - nbar / n
    if not opts.allow_negative and qv < 0:
        qv = 0.0
    return TsrvResult(qv, fast / (2.0 * n))


def fit_tsrv(y, T_years: float, opts: TsrvOptions = TsrvOptions()) -> NoiseVolEstimate:
    """TSRV estimate for one day of log-prices spanning ``T_years``.

    ``sigma2`` is the quadratic variation divided by the span; it is left
    negative (and flagged) when the raw estimate is negative.
    """
    res = tsrv(y, opts)
    n = len(y) - 1
    delta = T_years / n
    sigma2 = res.qv / T_years
    return NoiseVolEstimate(
        sigma2=sigma2,
        a2=res.noise_var,
        nsr=_nsr(max(sigma2, 0.0), res.noise_var, delta),
        avar=None,
        estimator_tag="TSRV",
        n_obs=n,
        converged=True,
        diagnostics={"negative": res.negative, "qv": res.qv, "k": int(opts.k), "delta": delta},
    )


def k_star(noise_var: float, quarticity: float, T: float, n: int) -> int:
    """Variance-minimizing subsample count ``round(c* n^(2/3))``, at least 2.

    ``quarticity`` is the integrated quarticity over the day; ``c*`` minimizes
    ``8 E[eps^2]^2 / c^2 + c (4T/3) quarticity``.
    """
    if not (noise_var > 0 and quarticity > 0 and T > 0 and n > 0):
        raise MalformedInput("all inputs to k_star must be positive")
    c = (12.0 * noise_var**2 / (T * quarticity)) ** (1.0 / 3.0)
    return max(2, int(round(c * n ** (2.0 / 3.0))))

