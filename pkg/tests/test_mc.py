import math
from dataclasses import replace

import numpy as np
import pytest

from hfnoise.errors import InvalidOptions, SchemaError
from hfnoise.mc import (CSV_HEADER, Cell, McExperimentConfig, McResultTable, McRow,
                        _path_estimates, compare_reference, parse_experiment_config,
                        reference_table, run_cell, run_table, shipped_config)
from hfnoise.mle import MleFitOptions
from hfnoise.tsrv import TsrvOptions


def small_config(**kw):
    base = dict(design="sv_grid", s_values=(0.5,), delta_bars=(60.0,), n_paths=12,
                base_seed=5)
    base.update(kw)
    return McExperimentConfig(**base)


def test_grid_shapes():
    t1 = parse_experiment_config(shipped_config("table1a"))
    assert len(t1.cells()) == 30
    t3 = parse_experiment_config(shipped_config("table34"))
    assert len(t3.cells()) == 24
    assert all(c.s == 0.5 for c in t3.cells())


def test_two_path_cell_is_hand_checkable():
    cfg = small_config(n_paths=2, estimators=("MLE",))
    rows, tally = run_cell(cfg, cfg.cells()[0])
    vals = []
    for p in range(2):
        v, _ = _path_estimates(cfg.cell_config(cfg.cells()[0]), 0, p, ("MLE",), TsrvOptions(),
                               MleFitOptions())
        vals.append(v[("MLE", "a2")])
    row = [r for r in rows if r.quantity == "a2"][0]
    assert row.mean == pytest.approx((vals[0] + vals[1]) / 2, rel=1e-15)
    assert row.sd == pytest.approx(abs(vals[0] - vals[1]) / math.sqrt(2), rel=1e-12)
    assert row.mc_se == pytest.approx(row.sd / math.sqrt(2), rel=1e-15)


def test_single_cell_table():
    table = run_table(small_config(estimators=("TSRV",)))
    assert len(table.rows) == 2
    assert {r.quantity for r in table.rows} == {"sigma2", "a2"}
    assert table.metadata["n_paths"] == 12


def test_thread_count_invariance():
    cfg = small_config(n_paths=16)
    one = run_table(cfg, threads=1).to_csv()
    assert run_table(cfg, threads=4).to_csv() == one
    assert run_table(cfg, threads=7).to_csv() == one


def test_same_paths_feed_both_estimators():
    cfg = small_config()
    both = run_table(cfg)
    only = run_table(replace(cfg, estimators=("TSRV",)))
    assert both.lookup(0.5, 0, 60, "TSRV", "a2") == only.lookup(0.5, 0, 60, "TSRV", "a2")


def test_failed_cell_marked():
    # 10-minute mean spacing gives too few returns for TSRV with K=25
    table = run_table(small_config(delta_bars=(600.0,), estimators=("TSRV",), tsrv_k=25))
    r = table.rows[0]
    assert r.n_effective < 12


def test_csv_roundtrip():
    table = run_table(small_config())
    text = table.to_csv()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    back = McResultTable.from_csv(text)
    assert back.to_csv() == text


def test_compare_identity_passes():
    ref = reference_table("table1a")
    rep = compare_reference(ref, ref)
    assert rep.passed and all(line.z == 0 for line in rep.lines)


def test_compare_detects_corruption():
    ref = reference_table("table1a")
    bad = McResultTable([replace(r, mean=r.mean * 1.5) if r.cell_delta_bar == 30 and r.cell_s == 0.1
                         else r for r in ref.rows])
    rep = compare_reference(bad, ref)
    assert not rep.passed
    assert [f.key for f in rep.failures] == [(0.1, 0.0, 30.0, "MLE", "a2")]
    assert rep.failures[0].z > 3


def test_compare_missing_cell_is_schema_error():
    ref = reference_table("table1a")
    with pytest.raises(SchemaError):
        compare_reference(McResultTable(ref.rows[:3]), ref)


def test_reference_fixtures_load():
    for name in ("table1a", "table1b", "table2a", "table2b", "table3a", "table3b",
                 "table4a", "table4b"):
        t = reference_table(name)
        n_delta = 6 if name.endswith("a") else 4
        n_axis = 5 if name[-2] in "12" else 4
        assert len(t.rows) == n_delta * n_axis
    assert reference_table("table1a").lookup(0.1, 0, 1, "MLE", "a2").sd == 1.30e-8
    assert reference_table("table4a").lookup(0.5, 252, 1, "MLE", "sigma2").mean == 0.201


def test_config_parsing():
    text = "design = svj_grid\nlambda_values = 4, 52\ndelta_bars_seconds = 1\nn_paths = 7\n"
    cfg = parse_experiment_config(text)
    assert cfg.lambda_values == (4.0, 52.0) and cfg.n_paths == 7
    with pytest.raises(InvalidOptions, match="delta_bars_seconds"):
        parse_experiment_config("design = sv_grid\n")
    with pytest.raises(InvalidOptions):
        parse_experiment_config("design = nope\ndelta_bars_seconds = 1\n")
    with pytest.raises(InvalidOptions):
        small_config(n_paths=1)
