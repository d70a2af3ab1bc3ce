"""Command-line front end: ``hfnoise {simulate,mc,estimate,regress,index,commonality}``.

Exit codes: 0 success, 1 reference comparison failed, 2 usage or config
error, 3 runtime or data error.  Every run writes its outputs atomically and
records a JSON manifest next to the primary output.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .core import DEFAULT_CONVENTION
from .errors import HfNoiseError, InvalidOptions, MalformedInput
from .ingest import (MIN_TRADES, EstimateOptions, PanelTable, build_daily_panel, parse_ticks,
                     write_ticks)
from .mc import (McResultTable, compare_reference, parse_experiment_config, read_keyvalue,
                 reference_table, run_table, shipped_config)
from .sim import SimConfig, simulate_path
from .tsrv import TsrvOptions

EXIT_OK, EXIT_COMPARE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
FLOAT_FMT = "%.17g"


class ConfigError(Exception):
    """Bad flags or config file; maps to exit code 2."""


# --- plumbing ----------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_outputs(files: dict) -> None:
    """Write ``{path: text}`` via temp files, then rename them all into place."""
    staged = []
    try:
        for path, text in files.items():
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


def _manifest(args, options: dict, inputs: list, outputs: list, started: float,
              seed=None) -> str:
    doc = {
        "subcommand": args.command,
        "argv": list(getattr(args, "_argv", [])),
        "options": options,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"


def _finish(args, files: dict, options: dict, inputs: list, started: float, seed=None):
    primary = Path(args.out)
    man = primary.with_name(primary.name + ".manifest.json")
    files = dict(files)
    files[man] = _manifest(args, options, inputs, list(files), started, seed)
    write_outputs(files)


def _input(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"input file not found: {path}")
    return p


def _frame_csv(df: pd.DataFrame, sep: str = ",") -> str:
    return df.to_csv(index=False, sep=sep, float_format=FLOAT_FMT, lineterminator="\n")


def _threads(value) -> int:
    if value is None:
        value = os.environ.get("HFNOISE_THREADS", "1")
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"threads must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigError("threads must be >= 1")
    return n


# --- simulate ----------------------------------------------------------------

_SIM_FIELDS = {f.name: f.type for f in fields(SimConfig)}
_SIM_ALIASES = {"lambda": "lam"}


def _sim_from_config(kv: dict) -> tuple[SimConfig, dict]:
    for key in ("delta_bar_seconds", "seed"):
        if key not in kv:
            raise ConfigError(f"missing required key: {key}")
    sim_kw, extra = {}, {}
    try:
        for k, v in kv.items():
            name = _SIM_ALIASES.get(k, k)
            if name == "seed":
                sim_kw[name] = int(v)
            elif name == "v0":
                sim_kw[name] = None if v.lower() in ("", "stationary") else float(v)
            elif name in _SIM_FIELDS:
                sim_kw[name] = float(v)
            elif k in ("n_symbols", "n_days"):
                extra[k] = int(v)
            elif k == "start_date":
                extra[k] = _dt.date.fromisoformat(v)
            elif k == "symbol_prefix":
                extra[k] = v
            else:
                raise ConfigError(f"unknown config key: {k}")
        cfg = SimConfig(**sim_kw)
    except (ValueError, MalformedInput) as exc:
        raise ConfigError(str(exc)) from None
    extra.setdefault("n_symbols", 1)
    extra.setdefault("n_days", 1)
    extra.setdefault("start_date", _dt.date(2000, 1, 3))
    extra.setdefault("symbol_prefix", "SIM")
    if extra["n_symbols"] < 1 or extra["n_days"] < 1:
        raise ConfigError("n_symbols and n_days must be >= 1")
    if cfg.T_years * DEFAULT_CONVENTION.seconds_per_year > DEFAULT_CONVENTION.seconds_per_day + 1e-6:
        raise ConfigError("T_years longer than one trading session")
    return cfg, extra


def _trading_days(start: _dt.date, n: int) -> list:
    first = np.busday_offset(np.datetime64(start), 0, roll="forward")
    days = np.busday_offset(first, np.arange(n))
    return [d.astype(object) for d in days]


def cmd_simulate(args) -> int:
    started = time.time()
    src = _input(args.config)
    cfg, extra = _sim_from_config(read_keyvalue(src.read_text()))
    days = _trading_days(extra["start_date"], extra["n_days"])
    width = max(3, len(str(extra["n_symbols"])))
    ticks_buf, truth = io.StringIO(), io.StringIO()
    tw = csv.writer(truth, lineterminator="\n")
    tw.writerow(["symbol", "date", "time_seconds", "x_true", "v", "qv_cum"])
    series = []
    for i in range(extra["n_symbols"]):
        sym = f"{extra['symbol_prefix']}{i + 1:0{width}d}"
        for j, day in enumerate(days):
            path = simulate_path(cfg, cell_index=i, path_index=j, symbol=sym, date=day)
            series.append(path.ticks)
            d = day.isoformat()
            for t, x, v, q in zip(path.ticks.times, path.x_true, path.v_path, path.qv_cum):
                tw.writerow([sym, d, repr(float(t)), repr(float(x)), repr(float(v)),
                             repr(float(q))])
    write_ticks(series, ticks_buf)
    out = Path(args.out)
    truth_path = out.with_name(out.stem + ".truth.csv")
    opts = {"sim": asdict(cfg), **{k: str(v) for k, v in extra.items()}}
    _finish(args, {out: ticks_buf.getvalue(), truth_path: truth.getvalue()}, opts, [src],
            started, seed=cfg.seed)
    return EXIT_OK


# --- mc ------------------------------------------------------------------------

def _load_experiment(name: str):
    p = Path(name)
    if p.is_file():
        return parse_experiment_config(p.read_text()), [p]
    try:
        return parse_experiment_config(shipped_config(name)), []
    except FileNotFoundError:
        raise ConfigError(f"no config file or shipped config named {name!r}") from None


def _load_reference(name: str):
    p = Path(name)
    if p.is_file():
        return McResultTable.from_csv(p.read_text()), [p]
    try:
        return reference_table(name), []
    except FileNotFoundError:
        raise ConfigError(f"no reference file or shipped fixture named {name!r}") from None


def cmd_mc(args) -> int:
    started = time.time()
    config, inputs = _load_experiment(args.config)
    if args.paths is not None:
        if args.paths < 2:
            raise ConfigError("--paths must be >= 2")
        config = replace(config, n_paths=args.paths)
    threads = _threads(args.threads)
    reference = None
    if args.reference:
        reference, ref_inputs = _load_reference(args.reference)
        inputs += ref_inputs
    table = run_table(config, threads=threads)
    out = Path(args.out)
    files = {out: table.to_csv()}
    code = EXIT_OK
    if reference is not None:
        cells = {r.key for r in table.rows}
        ref_rows = [r for r in reference.rows if r.key in cells]
        if not ref_rows:
            raise ConfigError("reference shares no cells with the configured grid")
        report = compare_reference(table, McResultTable(ref_rows), threshold=args.threshold)
        files[out.with_name(out.stem + ".compare.csv")] = report.to_csv()
        for ln in report.failures:
            print("FAIL cell s={:g} lambda={:g} delta_bar={:g} {} {}: mean={:.4g} ref={:.4g} "
                  "z={:.2f} sd_ratio={:.2f}".format(*ln.key, ln.mean, ln.ref_mean, ln.z,
                                                    ln.sd_ratio), file=sys.stderr)
        print(f"compared {len(report.lines)} rows, {len(report.failures)} failed", file=sys.stderr)
        if not report.passed:
            code = EXIT_COMPARE
    opts = {"config": asdict(config), "reference": args.reference, "threshold": args.threshold}
    _finish(args, files, opts, inputs, started, seed=config.base_seed)
    return code


# --- estimate ------------------------------------------------------------------

def cmd_estimate(args) -> int:
    started = time.time()
    src = _input(args.ticks)
    if args.min_trades < 2:
        raise ConfigError("--min-trades must be >= 2")
    try:
        tsrv_opts = TsrvOptions(k=args.tsrv_k)
    except HfNoiseError as exc:
        raise ConfigError(str(exc)) from None
    parsed = parse_ticks(src)
    opts = EstimateOptions(estimator=args.estimator, min_trades=args.min_trades, tsrv=tsrv_opts)
    build = build_daily_panel(parsed.series, opts)
    err = io.StringIO()
    w = csv.writer(err, lineterminator="\n")
    w.writerow(["kind", "symbol", "date", "line", "detail"])
    for e in parsed.errors:
        w.writerow(["parse", "", "", e.line, e.reason])
    for reason, count in sorted(parsed.dropped.items()):
        w.writerow(["dropped", "", "", "", f"{reason}={count}"])
    if build.filtered:
        w.writerow(["filtered", "", "", "", f"below_min_trades={build.filtered}"])
    for sym, day, msg in build.failures:
        w.writerow(["estimate", sym, day, "", msg])
    if len(build.panel) == 0:
        print(f"no stock-day produced an estimate ({parsed.rows_read} rows read); "
              "refusing to write an empty panel", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(args.out)
    files = {out: build.panel.to_csv(), out.with_name(out.stem + ".errors.csv"): err.getvalue()}
    meta = {"estimator": args.estimator, "min_trades": args.min_trades, "tsrv_k": args.tsrv_k,
            "rows_read": parsed.rows_read, "stock_days": len(build.panel),
            "failures": build.failure_tally, "filtered": build.filtered}
    _finish(args, files, meta, [src], started)
    return EXIT_OK


# --- panel statistics ----------------------------------------------------------

def _panel(path) -> PanelTable:
    src = _input(path)
    return PanelTable.from_csv(src)


def _cols(text: str) -> list:
    cols = [c.strip() for c in text.split(",") if c.strip()]
    if not cols:
        raise ConfigError("empty column list")
    return cols


def _require(frame: pd.DataFrame, cols) -> None:
    missing = [c for c in cols if c not in frame]
    if missing:
        raise ConfigError(f"columns not in panel: {missing}")


def _parse_se(text: str, frame: pd.DataFrame):
    if text in ("classical", "white"):
        return text
    kind, _, arg = text.partition(":")
    if kind == "cluster" and arg:
        _require(frame, [arg])
        return ("cluster", frame[arg].to_numpy())
    if kind == "nw":
        if not arg:
            return ("nw", None)
        try:
            lags = int(arg)
        except ValueError:
            raise ConfigError(f"bad Newey-West lag {arg!r}") from None
        if lags < 0:
            raise ConfigError("Newey-West lag must be >= 0")
        return ("nw", lags)
    raise ConfigError(f"unknown --se {text!r}; use classical, white, cluster:COL or nw:LAGS")


def cmd_regress(args) -> int:
    started = time.time()
    panel = _panel(args.panel)
    frame = panel.frame
    xs = _cols(args.x)
    _require(frame, [args.y] + xs)
    X = frame[xs].copy()
    if args.lag_x:
        # regressors dated t-1 within each entity
        X = frame.groupby("entity", sort=False)[xs].shift(1)
        X.columns = [f"{c}_lag1" for c in xs]
    se = _parse_se(args.se, frame)
    fe = None
    if args.fe:
        _require(frame, [args.fe])
        fe = frame[args.fe].to_numpy()
    from .stats import ols

    res = ols(frame[args.y].to_numpy(), X, intercept=True, fe_groups=fe, se=se,
              keep_residuals=False)
    table = res.table()
    table["se_variant"] = res.se_variant
    table["n_used"] = res.n_used
    table["r2"] = res.r2
    table["adj_r2"] = res.adj_r2
    opts = {"y": args.y, "x": xs, "se": args.se, "fe": args.fe, "lag_x": args.lag_x}
    _finish(args, {args.out: _frame_csv(table)}, opts, [Path(args.panel)], started)
    return EXIT_OK


def cmd_index(args) -> int:
    started = time.time()
    panel = _panel(args.panel)
    frame = panel.frame
    xs = _cols(args.x)
    _require(frame, [args.y] + xs)
    data = frame[[args.y] + xs].dropna()
    from .stats import fit_single_index

    fit = fit_single_index(data[args.y].to_numpy(), data[xs].to_numpy(), names=xs,
                           n_starts=args.starts, seed=args.seed)
    coef = pd.DataFrame({"term": xs, "b": fit.b, "b_original_scale": fit.b_original_scale})
    coef["bandwidth"] = fit.bandwidth
    coef["sls_objective"] = fit.sls_objective
    coef["n_used"] = len(data)
    coef["converged"] = int(fit.converged)
    coef["identified"] = int(fit.identified)
    link = pd.DataFrame(fit.link_grid, columns=["index", "g_hat"])
    out = Path(args.out)
    files = {out: _frame_csv(coef), out.with_name(out.stem + ".link.tsv"): _frame_csv(link, "\t")}
    opts = {"y": args.y, "x": xs, "starts": args.starts, "seed": args.seed}
    _finish(args, files, opts, [Path(args.panel)], started, seed=args.seed)
    return EXIT_OK


def cmd_commonality(args) -> int:
    started = time.time()
    panel = _panel(args.panel)
    frame = panel.frame
    _require(frame, [args.measure] + ([args.weights] if args.weights else []))
    industry = None
    if args.variant == "market":
        variant = "market"
    elif args.variant == "leadlag":
        variant = "lead_lag"
    elif args.variant.startswith("industry:") and args.variant[9:]:
        variant, industry = "market_industry", args.variant[9:]
        _require(frame, [industry])
    else:
        raise ConfigError(f"unknown --variant {args.variant!r}; use market, industry:COL or leadlag")
    from .stats import commonality

    rep = commonality(frame, args.measure, variant=variant, industry=industry,
                      weights=args.weights, nw_lags=args.nw_lags, min_obs=args.min_obs)
    summary = rep.to_frame()
    summary["n_failed"] = len(rep.failures)
    out = Path(args.out)
    files = {out: _frame_csv(summary),
             out.with_name(out.stem + ".per_stock.csv"): _frame_csv(rep.per_stock)}
    opts = {"measure": args.measure, "variant": args.variant, "weights": args.weights,
            "nw_lags": args.nw_lags, "min_obs": args.min_obs, "failures": rep.failures}
    _finish(args, files, opts, [Path(args.panel)], started)
    return EXIT_OK


# --- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hfnoise", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hfnoise {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate noisy tick data from a key=value config")
    s.add_argument("config")
    s.add_argument("--out", "-o", required=True, help="tick CSV path")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("mc", help="run a Monte Carlo grid and optionally compare to a reference")
    s.add_argument("config", help="config file or shipped name (table1a, table12, table34)")
    s.add_argument("--out", "-o", required=True)
    s.add_argument("--reference", help="reference CSV or shipped fixture name, e.g. table1a")
    s.add_argument("--paths", type=int, help="override n_paths")
    s.add_argument("--threads", help="worker threads (default $HFNOISE_THREADS or 1)")
    s.add_argument("--threshold", type=float, default=3.0, help="z-score limit (default 3)")
    s.set_defaults(func=cmd_mc)

    s = sub.add_parser("estimate", help="estimate a daily panel from a tick CSV")
    s.add_argument("ticks")
    s.add_argument("--out", "-o", required=True)
    s.add_argument("--estimator", choices=("mle", "tsrv", "both"), default="mle")
    s.add_argument("--min-trades", type=int, default=MIN_TRADES)
    s.add_argument("--tsrv-k", type=int, default=25)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("regress", help="OLS on panel columns")
    s.add_argument("panel")
    s.add_argument("--out", "-o", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--x", required=True, help="comma-separated regressors")
    s.add_argument("--se", default="classical", help="classical, white, cluster:COL or nw:LAGS")
    s.add_argument("--fe", help="fixed-effect group column (e.g. entity)")
    s.add_argument("--lag-x", action="store_true", help="use regressors from the previous date")
    s.set_defaults(func=cmd_regress)

    s = sub.add_parser("index", help="single-index model y = g(x'b)")
    s.add_argument("panel")
    s.add_argument("--out", "-o", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--x", required=True)
    s.add_argument("--starts", type=int, default=4, help="random starting directions")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("commonality", help="commonality regressions on a panel measure")
    s.add_argument("panel")
    s.add_argument("--out", "-o", required=True)
    s.add_argument("--measure", required=True)
    s.add_argument("--variant", default="market", help="market, industry:COL or leadlag")
    s.add_argument("--weights", help="value-weight column for the market average")
    s.add_argument("--nw-lags", type=int)
    s.add_argument("--min-obs", type=int, default=30)
    s.set_defaults(func=cmd_commonality)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args._argv = argv
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"hfnoise {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidOptions as exc:
        print(f"hfnoise {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HfNoiseError, OSError) as exc:
        print(f"hfnoise {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
