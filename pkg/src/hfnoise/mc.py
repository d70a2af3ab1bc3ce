"""Monte Carlo harness: grids of simulation cells, both estimators applied to
the same paths, and comparison against reference tables.

Per-path results land in pre-sized slot arrays indexed by path, and the
reduction runs afterwards in index order, so the resulting table does not
depend on how many worker threads filled the slots.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import DEFAULT_CONVENTION, log_returns
from .errors import CellFailed, HfNoiseError, InvalidOptions, SchemaError
from .mle import MleFitOptions, fit_mle
from .sim import SimConfig, simulate_path
from .tsrv import TsrvOptions, fit_tsrv

ESTIMATORS = ("MLE", "TSRV")
QUANTITIES = ("sigma2", "a2")
CSV_HEADER = ["cell_s", "cell_lambda", "cell_delta_bar", "estimator", "quantity",
              "mean", "sd", "n_effective", "mc_se"]


@dataclass(frozen=True)
class Cell:
    s: float
    lam: float
    delta_bar: float

    @property
    def key(self):
        return (float(self.s), float(self.lam), float(self.delta_bar))


@dataclass(frozen=True)
class McExperimentConfig:
    design: str = "sv_grid"
    s_values: tuple = (0.1, 0.3, 0.5, 0.75, 1.0)
    lambda_values: tuple = (4.0, 12.0, 52.0, 252.0)
    delta_bars: tuple = (1.0, 5.0, 10.0, 30.0, 120.0, 300.0)
    s_fixed: float = 0.5
    n_paths: int = 10_000
    estimators: tuple = ESTIMATORS
    tsrv_k: int = 25
    base_seed: int = 20_090_101
    sim: SimConfig = SimConfig()

    def __post_init__(self):
        if self.design not in ("sv_grid", "svj_grid"):
            raise InvalidOptions(f"unknown design {self.design!r}")
        if self.n_paths < 2:
            raise InvalidOptions("n_paths must be >= 2")
        if not self.delta_bars:
            raise InvalidOptions("delta_bars must be nonempty")
        if self.design == "sv_grid" and not self.s_values:
            raise InvalidOptions("s_values must be nonempty")
        if self.design == "svj_grid" and not self.lambda_values:
            raise InvalidOptions("lambda_values must be nonempty")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad or not self.estimators:
            raise InvalidOptions(f"estimators must be a nonempty subset of {ESTIMATORS}")

    def cells(self) -> list:
        if self.design == "sv_grid":
            return [Cell(s, 0.0, d) for s in self.s_values for d in self.delta_bars]
        return [Cell(self.s_fixed, lam, d) for lam in self.lambda_values for d in self.delta_bars]

    def cell_config(self, cell: Cell) -> SimConfig:
        return replace(self.sim, s=cell.s, lam=cell.lam, delta_bar_seconds=cell.delta_bar,
                       seed=self.base_seed)

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class McRow:
    cell_s: float
    cell_lambda: float
    cell_delta_bar: float
    estimator: str
    quantity: str
    mean: float
    sd: float
    n_effective: int
    mc_se: float

    @property
    def key(self):
        return (self.cell_s, self.cell_lambda, self.cell_delta_bar, self.estimator, self.quantity)


@dataclass
class McResultTable:
    rows: list
    metadata: dict = field(default_factory=dict)

    def lookup(self, s, lam, delta_bar, estimator, quantity) -> McRow:
        key = (float(s), float(lam), float(delta_bar), estimator, quantity)
        for row in self.rows:
            if row.key == key:
                return row
        raise KeyError(key)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([_fmt(r.cell_s), _fmt(r.cell_lambda), _fmt(r.cell_delta_bar), r.estimator,
                        r.quantity, _fmt(r.mean), _fmt(r.sd), r.n_effective, _fmt(r.mc_se)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "McResultTable":
        rd = csv.reader(io.StringIO(text))
        header = next(rd, None)
        if header != CSV_HEADER:
            raise SchemaError(f"expected header {','.join(CSV_HEADER)}, got {header}")
        rows = []
        for line_no, rec in enumerate(rd, start=2):
            if not rec:
                continue
            if len(rec) != len(CSV_HEADER):
                raise SchemaError(f"line {line_no}: expected {len(CSV_HEADER)} fields")
            try:
                rows.append(McRow(float(rec[0]), float(rec[1]), float(rec[2]), rec[3], rec[4],
                                  float(rec[5]), float(rec[6]), int(rec[7]), float(rec[8])))
            except ValueError as exc:
                raise SchemaError(f"line {line_no}: {exc}") from None
        return cls(rows)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _path_estimates(cfg: SimConfig, cell_index: int, path_index: int, estimators: Sequence[str],
                    tsrv_opts: TsrvOptions, mle_opts: MleFitOptions):
    """Simulate one path and return ``{(estimator, quantity): value}`` plus errors."""
    path = simulate_path(cfg, cell_index, path_index)
    ticks = path.ticks
    r = log_returns(ticks, DEFAULT_CONVENTION)
    out, errors = {}, {}
    for est in estimators:
        try:
            if est == "MLE":
                e = fit_mle(r, mle_opts)
                if not e.converged:
                    raise HfNoiseError("not converged")
            else:
                e = fit_tsrv(ticks.log_prices, r.T_years, tsrv_opts)
        except HfNoiseError as exc:
            errors[est] = type(exc).__name__
            continue
        out[(est, "sigma2")] = e.sigma2
        out[(est, "a2")] = e.a2
    return out, errors


def run_cell(config: McExperimentConfig, cell: Cell, cell_index: int = 0, threads: int = 1,
             mle_opts: MleFitOptions = MleFitOptions()) -> tuple[list, dict]:
    """Simulate ``n_paths`` paths of one cell and aggregate every estimator.

    Returns the cell rows and a per-estimator tally of path failures.  Raises
    :class:`CellFailed` when no path produced any estimate.
    """
    n = config.n_paths
    cfg = config.cell_config(cell)
    tsrv_opts = TsrvOptions(k=config.tsrv_k)
    keys = [(e, q) for e in config.estimators for q in QUANTITIES]
    slots = np.full((len(keys), n), np.nan)
    fails = [dict() for _ in range(n)]

    def work(p):
        vals, errs = _path_estimates(cfg, cell_index, p, config.estimators, tsrv_opts, mle_opts)
        for j, k in enumerate(keys):
            if k in vals:
                slots[j, p] = vals[k]
        fails[p] = errs

    if threads <= 1:
        for p in range(n):
            work(p)
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, range(n), chunksize=max(1, n // (8 * threads))))

    tally = {e: dict(Counter(f[e] for f in fails if e in f)) for e in config.estimators}
    if not np.any(np.isfinite(slots)):
        raise CellFailed(f"no successful path in cell {cell}", tally)
    rows = []
    for j, (est, q) in enumerate(keys):
        v = slots[j][np.isfinite(slots[j])]
        m = len(v)
        mean = float(np.mean(v)) if m else math.nan
        sd = float(np.std(v, ddof=1)) if m >= 2 else math.nan
        rows.append(McRow(cell.s, cell.lam, cell.delta_bar, est, q, mean, sd, m,
                          sd / math.sqrt(m) if m >= 2 else math.nan))
    return rows, tally


def run_table(config: McExperimentConfig, threads: int = 1, progress=None) -> McResultTable:
    """Run every cell of the grid; failed cells appear with ``n_effective = 0``."""
    rows, tallies = [], {}
    for ci, cell in enumerate(config.cells()):
        try:
            cell_rows, tally = run_cell(config, cell, ci, threads)
        except CellFailed as exc:
            cell_rows = [McRow(cell.s, cell.lam, cell.delta_bar, e, q, math.nan, math.nan, 0, math.nan)
                         for e in config.estimators for q in QUANTITIES]
            tally = exc.tally
        rows.extend(cell_rows)
        tallies[f"{cell.s:g}|{cell.lam:g}|{cell.delta_bar:g}"] = tally
        if progress is not None:
            progress(ci, cell)
    meta = {"config_digest": config.digest(), "base_seed": config.base_seed,
            "n_paths": config.n_paths, "failures": tallies}
    return McResultTable(rows, meta)


@dataclass(frozen=True)
class ComparisonLine:
    key: tuple
    mean: float
    ref_mean: float
    z: float
    sd_ratio: float
    passed: bool


@dataclass
class ComparisonReport:
    lines: list
    threshold: float

    @property
    def passed(self) -> bool:
        return all(line.passed for line in self.lines)

    @property
    def failures(self) -> list:
        return [line for line in self.lines if not line.passed]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell_s", "cell_lambda", "cell_delta_bar", "estimator", "quantity",
                    "mean", "ref_mean", "z", "sd_ratio", "pass"])
        for ln in self.lines:
            w.writerow([_fmt(ln.key[0]), _fmt(ln.key[1]), _fmt(ln.key[2]), ln.key[3], ln.key[4],
                        _fmt(ln.mean), _fmt(ln.ref_mean), _fmt(ln.z), _fmt(ln.sd_ratio),
                        int(ln.passed)])
        return buf.getvalue()


def compare_reference(results: McResultTable, reference: McResultTable, threshold: float = 3.0,
                      sd_band: tuple = (0.7, 1.4)) -> ComparisonReport:
    """Check every reference row against the matching result row.

    The z-score divides the mean difference by the combined Monte Carlo
    standard error of result and reference.  Result rows without a reference
    row are ignored; a reference row absent from the results is a
    :class:`SchemaError`.
    """
    by_key = {r.key: r for r in results.rows}
    lines = []
    for ref in reference.rows:
        res = by_key.get(ref.key)
        if res is None:
            raise SchemaError(f"reference cell {ref.key} missing from results")
        se = math.hypot(res.mc_se, ref.mc_se if math.isfinite(ref.mc_se) else 0.0)
        diff = res.mean - ref.mean
        z = 0.0 if diff == 0 else (diff / se if se > 0 else math.copysign(math.inf, diff))
        ratio = res.sd / ref.sd if ref.sd > 0 else (1.0 if res.sd == 0 else math.inf)
        ok = (math.isfinite(z) and abs(z) <= threshold and sd_band[0] <= ratio <= sd_band[1])
        lines.append(ComparisonLine(ref.key, res.mean, ref.mean, z, ratio, bool(ok)))
    return ComparisonReport(lines, threshold)


# --- experiment config files -------------------------------------------------

_SIM_KEYS = {"kappa": float, "v_bar": float, "a": float, "jump_x_sd": float,
             "jump_v_logmean": float, "jump_v_logsd": float, "T_years": float}


def read_keyvalue(text: str) -> dict:
    """Flatten a key=value file; ``[section]`` headers are optional groupings."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string("[__top__]\n" + text)
    out = {}
    for sec in cp.sections():
        for k, v in cp.items(sec):
            out[k] = v.strip()
    return out


def _floats(v: str) -> tuple:
    return tuple(float(x) for x in v.replace(";", ",").split(",") if x.strip())


def parse_experiment_config(text: str) -> McExperimentConfig:
    kv = read_keyvalue(text)
    if "design" not in kv:
        raise InvalidOptions("missing required key: design")
    if "delta_bars_seconds" not in kv:
        raise InvalidOptions("missing required key: delta_bars_seconds")
    fields_ = {"design": kv["design"], "delta_bars": _floats(kv["delta_bars_seconds"])}
    try:
        if "s_values" in kv:
            fields_["s_values"] = _floats(kv["s_values"])
        if "lambda_values" in kv:
            fields_["lambda_values"] = _floats(kv["lambda_values"])
        if "s_fixed" in kv:
            fields_["s_fixed"] = float(kv["s_fixed"])
        if "n_paths" in kv:
            fields_["n_paths"] = int(kv["n_paths"])
        if "tsrv_k" in kv:
            fields_["tsrv_k"] = int(kv["tsrv_k"])
        if "base_seed" in kv:
            fields_["base_seed"] = int(kv["base_seed"])
        if "estimators" in kv:
            fields_["estimators"] = tuple(e.strip().upper() for e in kv["estimators"].split(",")
                                          if e.strip())
        sim_kw = {k: conv(kv[k]) for k, conv in _SIM_KEYS.items() if k in kv}
    except ValueError as exc:
        raise InvalidOptions(str(exc)) from None
    fields_["sim"] = SimConfig(**sim_kw)
    return McExperimentConfig(**fields_)


def reference_table(name: str) -> McResultTable:
    """Load a shipped reference fixture, e.g. ``'table1a'``."""
    from importlib.resources import files

    text = files("hfnoise.reference").joinpath(f"{name}.csv").read_text()
    return McResultTable.from_csv(text)


def shipped_config(name: str) -> str:
    from importlib.resources import files

    return files("hfnoise.configs").joinpath(f"{name}.conf").read_text()


def iter_rows(table: McResultTable, estimator: Optional[str] = None,
              quantity: Optional[str] = None) -> Iterable[McRow]:
    for r in table.rows:
        if (estimator is None or r.estimator == estimator) and (quantity is None or r.quantity == quantity):
            yield r
