"""Commonality-in-liquidity regressions against leave-one-out market averages."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from ..errors import (DegenerateInput, HfNoiseError, InsufficientPanel, InvalidOptions,
                      SchemaError)
from .regression import default_nw_lags, ols

SIGNIFICANT_T = 1.645


def sign_test(values) -> float:
    """Exact two-sided binomial test of a zero median; zeros are discarded."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v) & (v != 0)]
    if len(v) == 0:
        raise DegenerateInput("sign test needs at least one nonzero value")
    k = int(np.sum(v > 0))
    return float(binomtest(k, len(v), 0.5, alternative="two-sided").pvalue)


def _wide(panel, column: str) -> pd.DataFrame:
    frame = panel.frame if hasattr(panel, "frame") else panel
    if column not in frame:
        raise SchemaError(f"no column {column!r} in panel")
    return frame.pivot(index="date", columns="entity", values=column).sort_index()


def _loo_from_wide(values: pd.DataFrame, weights: Optional[pd.DataFrame] = None,
                   groups: Optional[pd.Series] = None) -> pd.DataFrame:
    """Leave-one-out weighted mean per (date, entity), optionally within groups."""
    v = values.to_numpy(dtype=float)
    present = np.isfinite(v)
    if weights is None:
        w = present.astype(float)
    else:
        w = weights.reindex(index=values.index, columns=values.columns).to_numpy(dtype=float)
        w = np.where(present & np.isfinite(w), w, 0.0)
    wv = np.where(present, v, 0.0) * w
    if groups is None:
        tot_w = w.sum(axis=1, keepdims=True)
        tot_wv = wv.sum(axis=1, keepdims=True)
        cnt = present.sum(axis=1, keepdims=True)
    else:
        g = groups.reindex(values.columns).to_numpy()
        tot_w = np.zeros_like(w)
        tot_wv = np.zeros_like(w)
        cnt = np.zeros_like(w)
        for label in pd.unique(g):
            cols = g == label
            tot_w[:, cols] = w[:, cols].sum(axis=1, keepdims=True)
            tot_wv[:, cols] = wv[:, cols].sum(axis=1, keepdims=True)
            cnt[:, cols] = present[:, cols].sum(axis=1, keepdims=True)
    others_w = tot_w - w
    others_n = cnt - present
    with np.errstate(invalid="ignore", divide="ignore"):
        loo = (tot_wv - wv) / others_w
    # cancellation in tot - own is rounding-level; too few others -> missing
    loo = np.where((others_n >= 1) & (others_w > 0) & (cnt >= 2), loo, np.nan)
    return pd.DataFrame(loo, index=values.index, columns=values.columns)


def leave_one_out_average(panel, column: str, weights: Optional[str] = None) -> pd.Series:
    """Cross-sectional mean of ``column`` at each date excluding each entity.

    Returns a Series indexed by (entity, date), missing wherever the entity
    is absent or fewer than two entities are present at that date.
    """
    vals = _wide(panel, column)
    w = _wide(panel, weights) if weights else None
    loo = _loo_from_wide(vals, w)
    loo = loo.where(np.isfinite(vals.to_numpy()))
    return loo.stack(future_stack=True).swaplevel().sort_index().rename(f"loo_{column}")


@dataclass
class CoefficientSummary:
    name: str
    mean: float
    t_stat: float
    pct_positive: float
    pct_positive_significant: float
    median: float
    sign_p: float
    n_stocks: int


@dataclass
class CommonalityReport:
    variant: str
    coefficients: list
    mean_adj_r2: float
    median_adj_r2: float
    per_stock: pd.DataFrame
    failures: dict = field(default_factory=dict)

    def summary(self, name: str) -> CoefficientSummary:
        for c in self.coefficients:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_frame(self) -> pd.DataFrame:
        rows = [vars(c).copy() for c in self.coefficients]
        df = pd.DataFrame(rows)
        df.insert(0, "variant", self.variant)
        df["mean_adj_r2"] = self.mean_adj_r2
        df["median_adj_r2"] = self.median_adj_r2
        return df


def _summarize(name: str, slopes: np.ndarray, tstats: Optional[np.ndarray]) -> CoefficientSummary:
    slopes = np.asarray(slopes, dtype=float)
    N = len(slopes)
    sd = float(np.std(slopes, ddof=1)) if N >= 2 else math.nan
    mean = float(np.mean(slopes))
    t = mean / (sd / math.sqrt(N)) if N >= 2 and sd > 0 else math.nan
    try:
        p = sign_test(slopes)
    except DegenerateInput:
        p = math.nan
    sig = 100.0 * float(np.mean(tstats > SIGNIFICANT_T)) if tstats is not None else math.nan
    return CoefficientSummary(name, mean, t, 100.0 * float(np.mean(slopes > 0)), sig,
                              float(np.median(slopes)), p, N)


def commonality(panel, column: str, variant: str = "market", industry: Optional[str] = None,
                weights: Optional[str] = None, nw_lags: Optional[int] = None,
                min_obs: int = 30) -> CommonalityReport:
    """Regress each entity's daily log change of ``column`` on leave-one-out
    market (and industry, or lead/lag market) log changes.

    Parameters
    ----------
    variant : {'market', 'market_industry', 'lead_lag'}
    industry : str
        Panel column holding the industry label, required for
        ``'market_industry'``; an entity's label is its most frequent value.
    nw_lags : int, optional
        Newey-West lag for each time series regression; defaults to
        ``floor(4 (n/100)^(2/9))`` of that regression.

    Log changes are taken between consecutive panel dates.  Entities with
    fewer than ``min_obs`` complete observations are counted as failures.
    """
    if variant not in ("market", "market_industry", "lead_lag"):
        raise InvalidOptions(f"unknown variant {variant!r}")
    frame = panel.frame if hasattr(panel, "frame") else panel
    vals = _wide(frame, column)
    if (vals.to_numpy()[np.isfinite(vals.to_numpy())] <= 0).any():
        raise DegenerateInput(f"log changes need positive {column!r}")
    w = _wide(frame, weights) if weights else None
    market = _loo_from_wide(vals, w)
    y_chg = np.log(vals).diff()
    # market average excluding j at both t and t-1, as j's regressor
    m_chg = np.log(market).diff()
    regressors = {"market": m_chg}
    if variant == "lead_lag":
        regressors = {"market": m_chg, "lag": m_chg.shift(1), "lead": m_chg.shift(-1)}
    elif variant == "market_industry":
        if industry is None:
            raise InvalidOptions("market_industry variant needs an industry column")
        labels = frame.groupby("entity")[industry].agg(lambda s: s.mode().iloc[0])
        ind = _loo_from_wide(vals, w, groups=labels)
        regressors = {"market": m_chg, "industry": np.log(ind).diff()}

    names = list(regressors)
    slopes, tstats, adj, ents = [], [], [], []
    failures = {}
    for ent in vals.columns:
        y = y_chg[ent].to_numpy()
        X = np.column_stack([regressors[k][ent].to_numpy() for k in names])
        ok = np.isfinite(y) & np.all(np.isfinite(X), axis=1)
        if ok.sum() < min_obs:
            failures[ent] = "too_few_observations"
            continue
        lags = nw_lags if nw_lags is not None else default_nw_lags(int(ok.sum()))
        try:
            res = ols(y[ok], X[ok], intercept=True, se=("nw", lags), names=names,
                      keep_residuals=False)
        except HfNoiseError as exc:
            failures[ent] = type(exc).__name__
            continue
        slopes.append(res.coefficients[1:])
        tstats.append(res.t_stats[1:])
        adj.append(res.adj_r2)
        ents.append(ent)

    if not ents:
        raise InsufficientPanel(f"no entity had {min_obs} usable observations", failures)
    S = np.array(slopes)
    Tt = np.array(tstats)
    per_stock = pd.DataFrame(S, columns=[f"beta_{k}" for k in names], index=pd.Index(ents, name="entity"))
    for j, k in enumerate(names):
        per_stock[f"t_{k}"] = Tt[:, j]
    per_stock["adj_r2"] = adj
    coefs = [_summarize(k, S[:, j], Tt[:, j]) for j, k in enumerate(names)]
    if variant == "lead_lag":
        total = S.sum(axis=1)
        per_stock["beta_sum"] = total
        coefs.append(_summarize("sum", total, None))
    return CommonalityReport(variant, coefs, float(np.mean(adj)), float(np.median(adj)),
                             per_stock.reset_index(), failures)

