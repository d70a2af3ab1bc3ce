"""Least squares with classical, White, cluster and Newey-West covariances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..errors import DegenerateClustering, InsufficientData, MalformedInput, RankError


@dataclass
class RegressionResult:
    names: list
    coefficients: np.ndarray
    std_errors: np.ndarray
    se_variant: str
    n_used: int
    n_supplied: int
    r2: float
    adj_r2: float
    cov: np.ndarray
    residuals: Optional[np.ndarray] = None
    fitted: Optional[np.ndarray] = None
    df_resid: int = 0

    @property
    def t_stats(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.std_errors

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def t(self, name: str) -> float:
        return float(self.t_stats[self.names.index(name)])

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"term": self.names, "coef": self.coefficients,
                             "se": self.std_errors, "t_stat": self.t_stats})


def _bread(X: np.ndarray) -> np.ndarray:
    # (X'X)^-1 through the R factor of a QR decomposition
    _, R = np.linalg.qr(X, mode="reduced")
    Rinv = np.linalg.solve(R, np.eye(R.shape[0]))
    return Rinv @ Rinv.T


def white_cov(residuals, X) -> np.ndarray:
    """Heteroskedasticity-robust sandwich, no finite-sample scaling (HC0)."""
    X = np.asarray(X, dtype=float)
    u = np.asarray(residuals, dtype=float)
    B = _bread(X)
    S = (X * u[:, None]).T @ (X * u[:, None])
    return B @ S @ B


def newey_west_cov(residuals, X, lags: int) -> np.ndarray:
    """Bartlett-weighted HAC covariance; ``lags = 0`` is exactly :func:`white_cov`."""
    X = np.asarray(X, dtype=float)
    u = np.asarray(residuals, dtype=float)
    n = len(u)
    if lags < 0 or (lags >= n and n > 0):
        raise MalformedInput("need 0 <= lags < n")
    g = X * u[:, None]
    S = g.T @ g
    for lag in range(1, lags + 1):
        w = 1.0 - lag / (lags + 1.0)
        G = g[lag:].T @ g[:-lag]
        S += w * (G + G.T)
    B = _bread(X)
    return B @ S @ B


def default_nw_lags(n: int) -> int:
    """Plug-in lag length floor(4 (n/100)^(2/9))."""
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def cluster_cov(residuals, X, groups) -> np.ndarray:
    """Cluster-robust sandwich summing scores within each group.

    Scaled by ``G/(G-1) * (n-1)/(n-k)``; with one row per group this is the
    White covariance times ``n/(n-k)``.
    """
    X = np.asarray(X, dtype=float)
    u = np.asarray(residuals, dtype=float)
    codes, uniq = pd.factorize(pd.Series(np.asarray(groups)), sort=True)
    G = len(uniq)
    if G < 2:
        raise DegenerateClustering("cluster covariance needs at least two groups")
    n, k = X.shape
    scores = np.zeros((G, k))
    np.add.at(scores, codes, X * u[:, None])
    B = _bread(X)
    scale = G / (G - 1.0) * (n - 1.0) / (n - k)
    return scale * (B @ (scores.T @ scores) @ B)


def _rank_check(X: np.ndarray, names: Sequence[str]):
    _, R, piv = _qr_pivot(X)
    d = np.abs(np.diag(R))
    tol = max(X.shape) * np.finfo(float).eps * (d[0] if len(d) else 0.0)
    rank = int(np.sum(d > tol))
    if rank < X.shape[1]:
        dependent = [names[j] for j in piv[rank:]]
        raise RankError(f"design matrix is rank deficient; dependent columns: {dependent}",
                        dependent)


def _qr_pivot(X):
    from scipy.linalg import qr

    return qr(X, mode="economic", pivoting=True)


def _demean(a: np.ndarray, codes: np.ndarray, G: int) -> np.ndarray:
    a2 = a.reshape(len(a), -1)
    counts = np.bincount(codes, minlength=G).astype(float)
    sums = np.zeros((G, a2.shape[1]))
    np.add.at(sums, codes, a2)
    out = a2 - (sums / counts[:, None])[codes]
    return out.reshape(a.shape)


def ols(y, X, intercept: bool = True, fe_groups=None,
        se: Union[str, tuple] = "classical", names: Optional[Sequence[str]] = None,
        keep_residuals: bool = True) -> RegressionResult:
    """Ordinary least squares with a choice of standard errors.

    Parameters
    ----------
    y : array-like, shape (n,)
    X : array-like or DataFrame, shape (n, p)
        Regressors without the constant.  Column names are taken from a
        DataFrame when ``names`` is not given.
    intercept : bool
        Add a constant.  Ignored when ``fe_groups`` is given, since group
        demeaning absorbs it.
    fe_groups : array-like, optional
        Group labels for fixed effects (within-group demeaning).
    se : {'classical', 'white'} or ('cluster', groups) or ('nw', lags)

    Rows with a missing value in ``y``, ``X``, ``fe_groups`` or cluster
    labels are dropped before fitting.
    """
    if names is None:
        names = list(X.columns) if isinstance(X, pd.DataFrame) else None
    Xa = np.asarray(X, dtype=float)
    if Xa.ndim == 1:
        Xa = Xa[:, None]
    ya = np.asarray(y, dtype=float).ravel()
    n_supplied = len(ya)
    if Xa.shape[0] != n_supplied:
        raise MalformedInput("y and X have different numbers of rows")
    p = Xa.shape[1]
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]

    mask = np.isfinite(ya) & np.all(np.isfinite(Xa), axis=1)
    fe = None if fe_groups is None else pd.Series(np.asarray(fe_groups, dtype=object))
    if fe is not None:
        mask &= fe.notna().to_numpy()
    clusters = None
    if isinstance(se, tuple) and se[0] == "cluster":
        clusters = pd.Series(np.asarray(se[1], dtype=object))
        mask &= clusters.notna().to_numpy()
    ya, Xa = ya[mask], Xa[mask]
    n = len(ya)

    absorbed = 0
    if fe is not None:
        codes, uniq = pd.factorize(fe[mask].reset_index(drop=True), sort=True)
        absorbed = len(uniq)
        ya = _demean(ya, codes, absorbed)
        Xa = _demean(Xa, codes, absorbed)
        design, dnames = Xa, names
    elif intercept:
        design = np.column_stack([np.ones(n), Xa])
        dnames = ["const"] + names
    else:
        design, dnames = Xa, names

    k = design.shape[1]
    df_resid = n - k - absorbed
    if k == 0 or df_resid <= 0:
        raise InsufficientData(f"need more observations ({n}) than parameters ({k + absorbed})")
    _rank_check(design, dnames)

    Q, R = np.linalg.qr(design, mode="reduced")
    beta = np.linalg.solve(R, Q.T @ ya)
    fitted = design @ beta
    resid = ya - fitted
    ssr = float(resid @ resid)
    if fe is not None or intercept:
        sst = float(np.sum((ya - ya.mean()) ** 2)) if fe is None else float(ya @ ya)
    else:
        sst = float(ya @ ya)
    r2 = 1.0 - ssr / sst if sst > 0 else (1.0 if ssr == 0 else 0.0)
    dof_total = n - 1 if (intercept or fe is not None) else n
    adj_r2 = 1.0 - (1.0 - r2) * dof_total / df_resid

    if se == "classical":
        cov = ssr / df_resid * _bread(design)
        tag = "classical"
    elif se == "white":
        cov = white_cov(resid, design)
        tag = "white"
    elif isinstance(se, tuple) and se[0] == "nw":
        lags = int(se[1]) if se[1] is not None else default_nw_lags(n)
        cov = newey_west_cov(resid, design, lags)
        tag = f"newey_west({lags})"
    elif isinstance(se, tuple) and se[0] == "cluster":
        cov = cluster_cov(resid, design, clusters[mask].to_numpy())
        tag = "cluster"
    else:
        raise MalformedInput(f"unknown se variant {se!r}")
    stderr = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return RegressionResult(dnames, beta, stderr, tag, n, n_supplied, r2, adj_r2, cov,
                            resid if keep_residuals else None,
                            fitted if keep_residuals else None, df_resid)
