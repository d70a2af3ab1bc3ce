"""Gaussian-kernel Nadaraya-Watson regression and a single-index model fitted
by semiparametric least squares."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from ..errors import DegenerateInput, InsufficientData, MalformedInput

MIN_SUPPORT = 1e-12


def silverman_bandwidth(z) -> float:
    """Rule-of-thumb bandwidth 1.06 * sd * n^(-1/5), sample sd with ddof=1."""
    z = np.asarray(z, dtype=float)
    n = len(z)
    if n < 2:
        raise InsufficientData("need at least 2 points for a bandwidth")
    sd = float(np.std(z, ddof=1))
    if not sd > 0:
        raise DegenerateInput("index has zero variance")
    return 1.06 * sd * n ** -0.2


@dataclass
class KernelFit:
    values: np.ndarray
    supported: np.ndarray


def kernel_regress(z, y, h: float, eval_points=None, leave_one_out: bool = False,
                   chunk: int = 2048) -> KernelFit:
    """Nadaraya-Watson estimate of E[y | z] with a Gaussian kernel.

    With ``leave_one_out`` the evaluation points are the data points and the
    own observation is excluded.  Points whose total kernel weight falls below
    1e-12 are returned as NaN with ``supported`` False.
    """
    if not h > 0:
        raise MalformedInput("bandwidth must be positive")
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != y.shape or z.ndim != 1:
        raise MalformedInput("z and y must be 1-d of equal length")
    pts = z if (leave_one_out or eval_points is None) else np.asarray(eval_points, dtype=float)
    num = np.empty(len(pts))
    den = np.empty(len(pts))
    for lo in range(0, len(pts), chunk):
        u = (pts[lo:lo + chunk, None] - z[None, :]) / h
        w = np.exp(-0.5 * u * u)
        if leave_one_out:
            idx = np.arange(lo, min(lo + chunk, len(pts)))
            w[idx - lo, idx] = 0.0
        num[lo:lo + chunk] = w @ y
        den[lo:lo + chunk] = w.sum(axis=1)
    # weights above use exp(-u^2/2) without the 1/sqrt(2 pi) constant
    supported = den / math.sqrt(2.0 * math.pi) >= MIN_SUPPORT
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(supported, num / np.where(supported, den, 1.0), np.nan)
    return KernelFit(vals, supported)


@dataclass
class IndexModelFit:
    b: np.ndarray
    names: list
    bandwidth: float
    link_grid: np.ndarray
    sls_objective: float
    converged: bool
    identified: bool
    index: np.ndarray = field(repr=False, default=None)
    col_mean: np.ndarray = field(repr=False, default=None)
    col_sd: np.ndarray = field(repr=False, default=None)

    @property
    def b_original_scale(self) -> np.ndarray:
        """Direction in the units of the unstandardized regressors."""
        v = self.b / self.col_sd
        return v / np.linalg.norm(v)


def _sphere(theta: np.ndarray) -> np.ndarray:
    # hyperspherical coordinates -> unit vector in R^(len(theta)+1)
    d = len(theta) + 1
    b = np.empty(d)
    sin_prod = 1.0
    for i, t in enumerate(theta):
        b[i] = sin_prod * math.cos(t)
        sin_prod *= math.sin(t)
    b[d - 1] = sin_prod
    return b


def _angles(b: np.ndarray) -> np.ndarray:
    b = b / np.linalg.norm(b)
    d = len(b)
    theta = np.empty(d - 1)
    for i in range(d - 1):
        r = np.linalg.norm(b[i:])
        theta[i] = math.acos(np.clip(b[i] / r, -1.0, 1.0)) if r > 0 else 0.0
    if d >= 2 and b[-1] < 0:
        theta[-1] = 2.0 * math.pi - theta[-1]
    return theta


def _standardize(v: np.ndarray) -> np.ndarray:
    sd = v.std(ddof=1)
    return (v - v.mean()) / sd if sd > 0 else v - v.mean()


def sls_objective(b: np.ndarray, A: np.ndarray, y: np.ndarray) -> float:
    """Mean squared leave-one-out residual of y on the standardized index A b."""
    z = _standardize(A @ b)
    h = silverman_bandwidth(z)
    fit = kernel_regress(z, y, h, leave_one_out=True)
    r = y - fit.values
    r = r[fit.supported]
    return float(np.mean(r * r)) if len(r) else math.inf


def fit_single_index(y, A, names=None, n_starts: int = 4, seed: int = 0,
                     max_iter: int = 400, grid_size: int = 101,
                     min_r2: float = 0.05) -> IndexModelFit:
    """Estimate ``y = g(A b)`` with unknown increasing link ``g``.

    Columns of ``A`` are standardized.  The direction minimizes the
    leave-one-out kernel residual (``sls_objective``) over the unit sphere,
    starting from the OLS direction and ``n_starts`` random directions.  The
    sign of ``b`` is chosen so that the fitted link increases.  ``identified``
    is False when the index explains less than ``min_r2`` of Var(y).
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    n, d = A.shape
    if names is None:
        names = [f"x{j}" for j in range(d)]
    if n < 10 * d:
        raise InsufficientData(f"need at least {10 * d} rows for {d} regressors")
    mu = A.mean(axis=0)
    sd = A.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise DegenerateInput("a regressor has zero variance")
    As = (A - mu) / sd

    if d == 1:
        best_b, best_f, converged = np.ones(1), sls_objective(np.ones(1), As, y), True
    else:
        starts = []
        ols_dir, *_ = np.linalg.lstsq(np.column_stack([np.ones(n), As]), y, rcond=None)
        if np.linalg.norm(ols_dir[1:]) > 0:
            starts.append(ols_dir[1:] / np.linalg.norm(ols_dir[1:]))
        rng = np.random.default_rng(seed)
        for _ in range(n_starts):
            v = rng.standard_normal(d)
            starts.append(v / np.linalg.norm(v))
        best_b, best_f, converged = None, math.inf, False
        for b0 in starts:
            res = minimize(lambda th: sls_objective(_sphere(th), As, y), _angles(b0),
                           method="Nelder-Mead",
                           options={"maxiter": max_iter, "xatol": 1e-6, "fatol": 1e-12})
            if res.fun < best_f:
                best_b, best_f, converged = _sphere(res.x), float(res.fun), bool(res.success)

    z = As @ best_b
    zm, zs = z.mean(), z.std(ddof=1)
    zstd = (z - zm) / zs
    h = silverman_bandwidth(zstd)
    grid = np.linspace(zstd.min(), zstd.max(), grid_size)
    g = kernel_regress(zstd, y, h, grid).values
    ok = np.isfinite(g)
    slope = np.polyfit(grid[ok], g[ok], 1)[0] if ok.sum() >= 2 else 0.0
    if slope < 0:
        best_b, zstd, grid, g = -best_b, -zstd, -grid[::-1], g[::-1]
    var_y = float(np.var(y))
    identified = bool(var_y > 0 and 1.0 - best_f / var_y >= min_r2)
    return IndexModelFit(b=best_b, names=list(names), bandwidth=h,
                         link_grid=np.column_stack([grid, g]), sls_objective=best_f,
                         converged=converged, identified=identified, index=zstd,
                         col_mean=mu, col_sd=sd)
