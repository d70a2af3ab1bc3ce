import datetime as dt
import io
import math

import numpy as np
import pandas as pd
import pytest

from hfnoise.core import TickSeries
from hfnoise.errors import SchemaError
from hfnoise.ingest import (EstimateOptions, PanelTable, build_daily_panel, filter_stock_day,
                            parse_ticks, read_ticks_text, write_ticks)
from hfnoise.sim import SimConfig, simulate_path

HEAD = "symbol,date,time_seconds,price\n"


def test_interleaved_symbols():
    txt = HEAD + "A,2005-01-03,1,10\nB,2005-01-03,1,20\nA,2005-01-03,2,10.1\nB,2005-01-03,3,20.2\n"
    out = read_ticks_text(txt)
    assert [s.symbol for s in out.series] == ["A", "B"]
    assert np.allclose(out.series[1].log_prices, np.log([20, 20.2]))


def test_nonpositive_price_dropped_and_tallied():
    txt = HEAD + "A,2005-01-03,1,10\nA,2005-01-03,2,0\nA,2005-01-03,3,-1\nA,2005-01-03,4,11\n"
    out = read_ticks_text(txt)
    assert out.dropped["nonpositive_price"] == 2
    assert len(out.series[0]) == 2


def test_duplicate_timestamp_last_wins():
    txt = HEAD + "A,2005-01-03,5,10\nA,2005-01-03,5,10.01\nA,2005-01-03,6,10.02\n"
    out = read_ticks_text(txt)
    s = out.series[0]
    assert len(s) == 2 and s.log_prices[0] == math.log(10.01)
    assert out.dropped["duplicate_timestamp"] == 1


def test_unsorted_rows_are_sorted():
    txt = HEAD + "A,2005-01-03,9,3\nA,2005-01-03,1,1\nA,2005-01-03,5,2\n"
    s = read_ticks_text(txt).series[0]
    assert list(s.times) == [1, 5, 9]
    assert np.allclose(np.exp(s.log_prices), [1, 2, 3])


def test_schema_mismatch():
    with pytest.raises(SchemaError):
        read_ticks_text("sym,date,t,p\nA,2005-01-03,1,1\n")


def test_row_errors_collected_then_capped():
    good = "".join(f"A,2005-01-03,{i},10\n" for i in range(1, 1000))
    out = read_ticks_text(HEAD + good + "A,notadate,1,1\n")
    assert len(out.errors) == 1 and out.errors[0].line == 1001
    with pytest.raises(SchemaError):
        read_ticks_text(HEAD + good + "A,x,1,1\n" * 20)


def test_row_accounting():
    txt = HEAD + ("A,2005-01-03,1,10\nA,2005-01-03,1,10.5\nA,2005-01-03,2,0\n"
                  "A,2005-01-03,99999,5\nB,2005-01-03,4,7\nA,2005-01-03,3,11\nC,2005-01-03,x,1\n")
    out = read_ticks_text(txt, max_error_rate=0.5)
    assert out.rows_read == out.rows_kept + out.rows_dropped + len(out.errors)


def test_parse_is_idempotent(tmp_path):
    paths = [simulate_path(SimConfig(delta_bar_seconds=60.0, seed=3), 0, i,
                           symbol=f"S{i}", date=dt.date(2001, 2, 1 + i)).ticks for i in range(3)]
    buf = io.StringIO()
    write_ticks(paths, buf)
    first = read_ticks_text(buf.getvalue())
    buf2 = io.StringIO()
    write_ticks(first.series, buf2)
    assert buf2.getvalue() == buf.getvalue()
    second = read_ticks_text(buf2.getvalue())
    assert all(a == b for a, b in zip(first.series, second.series))


@pytest.mark.parametrize("n,keep", [(199, False), (200, True), (8445, True)])
def test_min_trades_rule(n, keep):
    t = TickSeries("A", dt.date(2005, 1, 3), np.linspace(0, 23_000, n), np.zeros(n))
    assert filter_stock_day(t) is keep


def test_build_panel_two_symbols_three_days():
    series = []
    cfg = SimConfig(delta_bar_seconds=10.0, seed=1)
    for i, sym in enumerate(["AAA", "BBB"]):
        for j in range(3):
            series.append(simulate_path(cfg, i, j, symbol=sym, date=dt.date(2003, 3, 3 + j)).ticks)
    build = build_daily_panel(series, EstimateOptions(estimator="both"))
    df = build.panel.frame
    assert len(df) == 6 and not build.failures
    for col in ("mle_a", "mle_sigma", "mle_nsr", "tsrv_sigma2"):
        assert np.all(np.isfinite(df[col]))


def test_build_panel_all_filtered():
    t = TickSeries("A", dt.date(2005, 1, 3), np.arange(50.0), np.zeros(50))
    build = build_daily_panel([t])
    assert len(build.panel) == 0 and build.filtered == 1


def test_panel_uniqueness_and_roundtrip():
    df = pd.DataFrame({"entity": ["a", "a"], "date": ["2001-01-02", "2001-01-02"], "x": [1, 2]})
    with pytest.raises(SchemaError):
        PanelTable(df)
    with pytest.raises(SchemaError):
        PanelTable(pd.DataFrame({"entity": ["a"], "date": ["2001-01-02"], "x": [np.inf]}))
    ok = PanelTable(pd.DataFrame({"entity": ["b", "a"], "date": ["2001-01-03", "2001-01-02"],
                                  "x": [0.1, np.nan]}))
    assert list(ok.frame.entity) == ["a", "b"]
    back = PanelTable.from_csv(io.StringIO(ok.to_csv()))
    assert back.to_csv() == ok.to_csv()
