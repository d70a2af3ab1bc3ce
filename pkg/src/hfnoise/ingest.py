"""Tick-file parsing, the stock-day inclusion rule and the daily estimate panel.

Tick CSV layout: header ``symbol,date,time_seconds,price``; ``date`` is
YYYY-MM-DD and ``time_seconds`` counts from the session open.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO, Union

import numpy as np
import pandas as pd

from .core import DEFAULT_CONVENTION, TickSeries, TimeConvention, log_returns
from .errors import HfNoiseError, RowError, SchemaError
from .mle import MleFitOptions, fit_mle
from .tsrv import TsrvOptions, fit_tsrv

TICK_HEADER = ["symbol", "date", "time_seconds", "price"]
MIN_TRADES = 200


@dataclass
class ParsedTicks:
    series: list
    rows_read: int = 0
    dropped: Counter = field(default_factory=Counter)
    errors: list = field(default_factory=list)

    @property
    def rows_kept(self) -> int:
        return sum(len(s) for s in self.series)

    @property
    def rows_dropped(self) -> int:
        return sum(self.dropped.values())


def _open(source) -> tuple[TextIO, bool]:
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        return open(source, "r", encoding="utf-8", newline=""), True
    return source, False


def parse_ticks(source, conv: TimeConvention = DEFAULT_CONVENTION,
                max_error_rate: float = 0.01) -> ParsedTicks:
    """Read a tick CSV into one :class:`TickSeries` per (symbol, date).

    Rows are sorted by time within a group; trades sharing a timestamp
    collapse to the last one in file order.  Nonpositive prices and times
    outside the session are dropped and tallied.  Unparseable rows are
    collected as :class:`RowError` up to ``max_error_rate`` of the rows read,
    beyond which the file is rejected.

    Every row read ends up in exactly one of: a kept tick, a ``dropped``
    tally bucket, or ``errors``.
    """
    fh, owned = _open(source)
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TICK_HEADER:
            raise SchemaError(f"expected header {','.join(TICK_HEADER)}, got {header}")
        groups = defaultdict(list)
        out = ParsedTicks(series=[])
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            out.rows_read += 1
            try:
                if len(rec) != 4:
                    raise ValueError(f"expected 4 fields, got {len(rec)}")
                sym = rec[0].strip()
                if not sym:
                    raise ValueError("empty symbol")
                day = _dt.date.fromisoformat(rec[1].strip())
                t = float(rec[2])
                price = float(rec[3])
                if not math.isfinite(t):
                    raise ValueError("non-finite time")
            except ValueError as exc:
                out.errors.append(RowError(line_no, str(exc)))
                continue
            if not (math.isfinite(price) and price > 0):
                out.dropped["nonpositive_price"] += 1
                continue
            if t < 0 or t > conv.seconds_per_day:
                out.dropped["out_of_session"] += 1
                continue
            groups[(sym, day)].append((t, price))
        if out.rows_read and len(out.errors) > max_error_rate * out.rows_read:
            raise SchemaError(f"{len(out.errors)} unparseable rows out of {out.rows_read}; "
                              f"first: {out.errors[0]}")
    finally:
        if owned:
            fh.close()

    for (sym, day) in sorted(groups):
        rows = groups[(sym, day)]
        t = np.array([r[0] for r in rows])
        p = np.array([r[1] for r in rows])
        order = np.argsort(t, kind="stable")
        t, p = t[order], p[order]
        # last trade wins on duplicate timestamps
        last = np.concatenate([t[1:] != t[:-1], [True]])
        out.dropped["duplicate_timestamp"] += int(np.sum(~last))
        t, p = t[last], p[last]
        if len(t) < 2:
            out.dropped["too_few_ticks"] += len(t)
            continue
        out.series.append(TickSeries(sym, day, t, np.log(p), conv.seconds_per_day, prices=p))
    if out.dropped.get("duplicate_timestamp") == 0:
        del out.dropped["duplicate_timestamp"]
    return out


def write_ticks(series: Iterable[TickSeries], fh: TextIO) -> None:
    """Emit the canonical tick CSV; re-parsing it reproduces the series."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TICK_HEADER)
    for s in series:
        d = s.date.isoformat()
        for t, p in zip(s.times, s.price_values):
            w.writerow([s.symbol, d, repr(float(t)), repr(float(p))])


def filter_stock_day(ticks: TickSeries, min_trades: int = MIN_TRADES) -> bool:
    """Keep a stock-day iff it has at least ``min_trades`` transactions."""
    return len(ticks) >= min_trades


class PanelTable:
    """Wide (entity, date) panel of named numeric columns.

    Each row is one entity-date.  A NaN cell means the observation is
    absent; infinities are rejected.  ``units`` documents each column and
    ``weight`` optionally names a value-weighting column.
    """

    def __init__(self, frame: pd.DataFrame, units: Optional[dict] = None,
                 weight: Optional[str] = None):
        if "entity" not in frame or "date" not in frame:
            raise SchemaError("panel needs 'entity' and 'date' columns")
        df = frame.copy()
        df["entity"] = df["entity"].astype(str)
        df["date"] = pd.to_datetime(df["date"]).dt.strftime("%Y-%m-%d")
        dup = df.duplicated(["entity", "date"])
        if dup.any():
            first = df.loc[dup, ["entity", "date"]].iloc[0].tolist()
            raise SchemaError(f"duplicate (entity, date) row: {first}")
        value_cols = [c for c in df.columns if c not in ("entity", "date")]
        for c in value_cols:
            df[c] = pd.to_numeric(df[c], errors="raise").astype(float)
            if np.isinf(df[c].to_numpy()).any():
                raise SchemaError(f"column {c!r} holds infinite values")
        if weight is not None and weight not in value_cols:
            raise SchemaError(f"weight column {weight!r} not in panel")
        self.frame = df.sort_values(["entity", "date"], kind="stable").reset_index(drop=True)
        self.units = dict(units or {})
        self.weight = weight

    @property
    def columns(self) -> list:
        return [c for c in self.frame.columns if c not in ("entity", "date")]

    def __len__(self) -> int:
        return len(self.frame)

    def column(self, name: str) -> pd.Series:
        if name not in self.frame:
            raise SchemaError(f"no column {name!r} in panel")
        return self.frame.set_index(["entity", "date"])[name]

    def to_csv(self) -> str:
        return self.frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")

    @classmethod
    def from_csv(cls, source, weight: Optional[str] = None) -> "PanelTable":
        df = pd.read_csv(source, dtype={"entity": str, "date": str})
        if list(df.columns[:2]) != ["entity", "date"]:
            raise SchemaError("panel CSV must start with columns entity,date")
        return cls(df, weight=weight)


PANEL_UNITS = {
    "n_obs": "ticks per stock-day",
    "mle_sigma2": "annualized variance", "mle_sigma": "annualized volatility",
    "mle_a2": "squared log-price", "mle_a": "log-price", "mle_nsr": "fraction",
    "mle_converged": "0/1 flag",
    "tsrv_sigma2": "annualized variance", "tsrv_a2": "squared log-price",
    "tsrv_a": "log-price", "tsrv_nsr": "fraction", "tsrv_negative": "0/1 flag",
}


@dataclass(frozen=True)
class EstimateOptions:
    estimator: str = "mle"
    min_trades: int = MIN_TRADES
    tsrv: TsrvOptions = TsrvOptions()
    mle: MleFitOptions = MleFitOptions()


@dataclass
class PanelBuild:
    panel: PanelTable
    failures: list
    filtered: int

    @property
    def failure_tally(self) -> dict:
        return dict(Counter(f[0] for f in self.failures))


def estimate_stock_day(ticks: TickSeries, opts: EstimateOptions,
                       conv: TimeConvention = DEFAULT_CONVENTION) -> dict:
    """Estimate one stock-day; returns the panel columns for that row."""
    r = log_returns(ticks, conv)
    row = {"n_obs": float(len(ticks))}
    if opts.estimator in ("mle", "both"):
        e = fit_mle(r, opts.mle)
        row.update(mle_sigma2=e.sigma2, mle_sigma=e.sigma, mle_a2=e.a2, mle_a=e.a,
                   mle_nsr=e.nsr, mle_converged=float(e.converged))
    if opts.estimator in ("tsrv", "both"):
        e = fit_tsrv(ticks.log_prices, r.T_years, opts.tsrv)
        row.update(tsrv_sigma2=e.sigma2, tsrv_a2=e.a2, tsrv_a=e.a, tsrv_nsr=e.nsr,
                   tsrv_negative=float(e.diagnostics["negative"]))
    return row


def build_daily_panel(series: Iterable[TickSeries], opts: EstimateOptions = EstimateOptions(),
                      conv: TimeConvention = DEFAULT_CONVENTION) -> PanelBuild:
    """Estimate every kept stock-day and assemble the panel.

    Stock-days below ``min_trades`` are filtered; estimation errors are
    recorded as ``(symbol, date, error)`` and do not stop the build.
    """
    rows, failures, filtered = [], [], 0
    for ticks in series:
        if not filter_stock_day(ticks, opts.min_trades):
            filtered += 1
            continue
        try:
            vals = estimate_stock_day(ticks, opts, conv)
        except HfNoiseError as exc:
            failures.append((ticks.symbol, ticks.date.isoformat(), f"{type(exc).__name__}: {exc}"))
            continue
        rows.append({"entity": ticks.symbol, "date": ticks.date.isoformat(), **vals})
    cols = ["entity", "date"] + list(rows[0].keys() - {"entity", "date"}) if rows else ["entity", "date"]
    frame = pd.DataFrame(rows, columns=_ordered(cols))
    units = {c: PANEL_UNITS[c] for c in frame.columns if c in PANEL_UNITS}
    return PanelBuild(PanelTable(frame, units), failures, filtered)


def _ordered(cols):
    order = ["entity", "date"] + list(PANEL_UNITS)
    return sorted(cols, key=lambda c: order.index(c) if c in order else len(order))


def read_ticks_text(text: str, **kw) -> ParsedTicks:
    return parse_ticks(io.StringIO(text), **kw)
