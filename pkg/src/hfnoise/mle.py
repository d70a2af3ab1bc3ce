"""Gaussian maximum likelihood for (sigma2, a2) from the MA(1) structure of
noisy log-returns.

Under i.i.d. noise the observed returns satisfy ``R_i = u_i + eta*u_{i-1}``
with ``gamma2*(1 + eta**2) = sigma2*Delta + 2*a2`` and ``gamma2*eta = -a2``.
The likelihood is profiled over ``gamma2`` in closed form, leaving a scalar
search over ``eta`` in ``(-1, 0]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .core import NoiseVolEstimate, ReturnSeries, nsr as _nsr
from .errors import DegenerateInput, InsufficientData, MalformedInput, NumericalFailure

_LOG_2PI = math.log(2.0 * math.pi)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Ma1Params:
    gamma2: float
    eta: float

    def __post_init__(self):
        if not self.gamma2 > 0:
            raise MalformedInput(f"gamma2 must be positive, got {self.gamma2!r}")
        if not -1.0 < self.eta <= 0.0:
            raise MalformedInput(f"eta must lie in (-1, 0], got {self.eta!r}")


@dataclass(frozen=True)
class MleFitOptions:
    eta_tol: float = 1e-10
    eta_lower: float = -1.0 + 1e-9
    max_iter: int = 200
    min_obs: int = 10
    # coarse scan used to bracket the global maximum before golden-section
    n_scan: int = 37

    def __post_init__(self):
        if not self.eta_tol > 0:
            raise MalformedInput("eta_tol must be positive")
        if not -1.0 < self.eta_lower < 0.0:
            raise MalformedInput("eta_lower must lie in (-1, 0)")


def to_ma1(sigma2: float, a2: float, delta: float) -> Ma1Params:
    """Map (sigma2, a2) at sampling interval ``delta`` to MA(1) parameters."""
    if sigma2 < 0 or a2 < 0 or not delta > 0:
        raise MalformedInput("need sigma2 >= 0, a2 >= 0, delta > 0")
    s = sigma2 * delta
    if s + a2 == 0:
        raise DegenerateInput("sigma2*delta and a2 are both zero")
    if s == 0:
        raise DegenerateInput("pure noise puts eta on the -1 boundary")
    total = s + 2.0 * a2
    # smaller-magnitude root of a2*eta^2 + total*eta + a2 = 0, cancellation-free
    eta = -2.0 * a2 / (total + math.sqrt(s * (s + 4.0 * a2)))
    gamma2 = total / (1.0 + eta * eta)
    return Ma1Params(gamma2=gamma2, eta=eta)


def from_ma1(p: Ma1Params, delta: float) -> tuple[float, float]:
    """Inverse of :func:`to_ma1`: returns ``(sigma2, a2)``."""
    a2 = -p.gamma2 * p.eta
    sigma2 = p.gamma2 * (1.0 + p.eta) ** 2 / delta
    return sigma2, a2


def _det_sequence(eta: float, n: int) -> np.ndarray:
    """Leading principal minors D_0..D_n of V(eta) with D_0 = 1.

    D_i = 1 + eta^2 + ... + eta^(2i), evaluated without cancellation.
    """
    i = np.arange(n + 1, dtype=float)
    if eta == 0.0:
        return np.ones(n + 1)
    logq = 2.0 * math.log(abs(eta))
    return np.expm1((i + 1.0) * logq) / math.expm1(logq)


def _innovations(R: np.ndarray, eta: float) -> tuple[float, float]:
    """Return ``(ln det V, R' V^-1 R)`` at unit gamma2 in O(n).

    Equivalent to the prediction-error recursion
    ``d_i = 1 + eta^2 - eta^2/d_{i-1}``, ``e_i = R_i - (eta/d_{i-1}) e_{i-1}``
    with ``d_i = D_i/D_{i-1}``.  The scaled errors ``f_i = D_{i-1} e_i`` obey
    the constant-coefficient recursion ``f_i = D_{i-1} R_i - eta f_{i-1}``,
    which is run as a linear filter.
    """
    n = len(R)
    D = _det_sequence(eta, n)
    f = lfilter([1.0], [1.0, eta], D[:-1] * R)
    quad = float(np.sum(f * f / (D[:-1] * D[1:])))
    return math.log(D[-1]), quad


def _check_returns(r) -> np.ndarray:
    R = np.asarray(r.returns if isinstance(r, ReturnSeries) else r, dtype=float)
    if R.ndim != 1 or len(R) < 1:
        raise InsufficientData("need at least one return")
    if not np.all(np.isfinite(R)):
        raise MalformedInput("non-finite return")
    return R


def loglik(r, p: Ma1Params) -> float:
    """Exact Gaussian MA(1) log-likelihood of the return vector."""
    R = _check_returns(r)
    logdet, quad = _innovations(R, p.eta)
    n = len(R)
    return -0.5 * logdet - 0.5 * n * (_LOG_2PI + math.log(p.gamma2)) - quad / (2.0 * p.gamma2)


def profile_gamma2(r, eta: float) -> float:
    """Maximizer of the likelihood over gamma2 for fixed eta."""
    R = _check_returns(r)
    if not -1.0 < eta <= 0.0:
        raise MalformedInput("eta must lie in (-1, 0]")
    _, quad = _innovations(R, eta)
    return quad / len(R)


def profile_loglik(r, eta: float) -> float:
    """Log-likelihood with gamma2 profiled out."""
    R = _check_returns(r)
    n = len(R)
    logdet, quad = _innovations(R, eta)
    g2 = quad / n
    if not g2 > 0:
        return -math.inf
    return -0.5 * logdet - 0.5 * n * (_LOG_2PI + math.log(g2) + 1.0)


def _golden_max(f, lo: float, hi: float, tol: float, max_iter: int):
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    it = 0
    while hi - lo > tol and it < max_iter:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
        it += 1
    x, fx = (c, fc) if fc >= fd else (d, fd)
    return x, fx, hi - lo <= tol


def _scan_grid(eta_lower: float, n_scan: int) -> np.ndarray:
    # log-spaced in 1 + eta so that the near -1 region (high frequency) is resolved
    lo = math.log10(1.0 + eta_lower)
    return np.concatenate([[0.0], -(1.0 - 10.0 ** np.linspace(-0.05, lo, n_scan - 1))])


def fit_mle(r: ReturnSeries, opts: MleFitOptions = MleFitOptions()) -> NoiseVolEstimate:
    """Maximum-likelihood (sigma2, a2) for one series of log-returns.

    Parameters
    ----------
    r : ReturnSeries
        Returns with their elapsed times; the sampling interval entering the
        MA(1) mapping is the mean gap ``T_years / n``.
    opts : MleFitOptions

    Returns
    -------
    NoiseVolEstimate
        ``converged`` is False when the golden-section budget ran out.  A
        maximum on the ``eta = 0`` boundary is reported as ``a2 = 0`` with
        ``diagnostics['boundary'] = 'zero_noise'``.
    """
    R = _check_returns(r)
    n = len(R)
    if n < opts.min_obs:
        raise InsufficientData(f"need at least {opts.min_obs} returns, got {n}")
    if not np.any(R != 0):
        raise DegenerateInput("all returns are zero")
    delta = r.mean_gap

    def f(eta):
        return profile_loglik(R, eta)

    grid = _scan_grid(opts.eta_lower, opts.n_scan)
    vals = np.array([f(e) for e in grid])
    if not np.all(np.isfinite(vals)):
        raise NumericalFailure("non-finite profile likelihood on the scan grid")
    j = int(np.argmax(vals))
    hi = grid[j - 1] if j > 0 else 0.0
    lo = grid[j + 1] if j + 1 < len(grid) else opts.eta_lower
    eta, best, converged = _golden_max(f, lo, hi, opts.eta_tol, opts.max_iter)
    if not math.isfinite(best):
        raise NumericalFailure("non-finite profile likelihood")
    boundary = None
    if vals[0] >= best:
        eta, best = 0.0, float(vals[0])
        boundary = "zero_noise"
    elif eta - opts.eta_lower <= opts.eta_tol:
        boundary = "eta_lower"

    g2 = profile_gamma2(R, eta)
    p = Ma1Params(gamma2=g2, eta=eta)
    sigma2, a2 = from_ma1(p, delta)
    a2 = max(a2, 0.0)
    return NoiseVolEstimate(
        sigma2=sigma2,
        a2=a2,
        nsr=_nsr(sigma2, a2, delta),
        avar=avar_normal(sigma2, a2, delta),
        estimator_tag="MLE",
        n_obs=n,
        converged=converged,
        diagnostics={"eta": eta, "gamma2": g2, "loglik": best, "delta": delta, "boundary": boundary},
    )


def avar_normal(sigma2: float, a2: float, delta: float) -> np.ndarray:
    """Asymptotic covariance of (sigma2_hat, a2_hat) under Gaussian noise."""
    s = sigma2 * delta
    root = math.sqrt(s * (4.0 * a2 + s))
    h = 2.0 * a2 + root + s
    v11 = 4.0 * math.sqrt(sigma2**3 * delta * (4.0 * a2 + s)) + 2.0 * sigma2**2 * delta
    v12 = -sigma2 * delta * h
    v22 = 0.5 * delta * (2.0 * a2 + s) * h
    return np.array([[v11, v12], [v12, v22]])


def avar_true(sigma2: float, a2: float, delta: float, cum4: float) -> np.ndarray:
    """Asymptotic covariance allowing non-Gaussian noise with fourth cumulant ``cum4``."""
    out = avar_normal(sigma2, a2, delta)
    out[1, 1] += cum4 * delta
    return out


def cum4_from_moments(m2: float, m4: float) -> float:
    """Fourth cumulant of a mean-zero variable from its 2nd and 4th moments."""
    if m2 < 0 or m4 < m2 * m2:
        raise MalformedInput("moments violate m2 >= 0 and m4 >= m2^2")
    return m4 - 3.0 * m2 * m2
