import math

import numpy as np
import pytest

from regime_portfolio.errors import (
    DuplicateDate,
    EmptyCalendarIntersection,
    InsufficientHistory,
    MacroGapTooLarge,
    MissingColumn,
    NonPositivePrice,
    UnknownSector,
    UnparsableRow,
)
from regime_portfolio.market_data import (
    align_panel,
    compute_log_returns,
    load_macro_csv,
    load_manifest,
    load_ohlcv_csv,
    load_panel,
    write_panel,
)

from conftest import make_bars, make_macro, random_walk

HEADER = "date,open,high,low,close,adj_close,volume\n"


def _csv(tmp_path, body, name="a.csv"):
    p = tmp_path / name
    p.write_text(HEADER + body)
    return p


def test_three_rows_load_in_date_order(tmp_path):
    p = _csv(tmp_path, "2021-03-03,1,1,1,1,1,5\n2021-03-01,2,2,2,2,2,5\n2021-03-02,3,3,3,3,3,5\n")
    bars = load_ohlcv_csv(p, "AAA", "Technology")
    assert [b.date.isoformat() for b in bars] == ["2021-03-01", "2021-03-02", "2021-03-03"]
    assert [b.adj_close for b in bars] == [2.0, 3.0, 1.0]


def test_zero_adj_close_names_the_row(tmp_path):
    p = _csv(tmp_path, "2021-03-01,1,1,1,1,1,5\n2021-03-02,1,1,1,1,0,5\n")
    with pytest.raises(NonPositivePrice, match="row 3"):
        load_ohlcv_csv(p, "AAA", "Technology")


def test_duplicate_date(tmp_path):
    p = _csv(tmp_path, "2021-03-01,1,1,1,1,1,5\n2021-03-01,1,1,1,1,1,5\n")
    with pytest.raises(DuplicateDate):
        load_ohlcv_csv(p, "AAA", "Technology")


@pytest.mark.parametrize(
    "body, err",
    [
        ("2021-03-01,1,1,1,x,1,5\n", UnparsableRow),
        ("03/01/2021,1,1,1,1,1,5\n", UnparsableRow),
        ("2021-03-01,1,1,1,1\n", UnparsableRow),
        ("2021-03-01,1,0.5,1,1,1,5\n", UnparsableRow),
    ],
)
def test_bad_rows(tmp_path, body, err):
    with pytest.raises(err):
        load_ohlcv_csv(_csv(tmp_path, body), "AAA", "Technology")


def test_missing_column(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("date,open,high,low,close,volume\n2021-03-01,1,1,1,1,5\n")
    with pytest.raises(MissingColumn, match="adj_close"):
        load_ohlcv_csv(p, "AAA", "Technology")


def test_unknown_sector(tmp_path):
    with pytest.raises(UnknownSector):
        load_ohlcv_csv(_csv(tmp_path, "2021-03-01,1,1,1,1,1,5\n"), "AAA", "Crypto")


def test_log_returns():
    assert compute_log_returns([100.0, 100.0 * math.e]) == pytest.approx([1.0], abs=1e-15)
    assert np.all(compute_log_returns([5.0] * 10) == 0.0)
    # ln(1.1) from a 30-digit mpmath evaluation
    assert compute_log_returns([100.0, 110.0])[0] == pytest.approx(0.0953101798043248600, abs=1e-15)
    with pytest.raises(NonPositivePrice):
        compute_log_returns([1.0, -1.0])


def _macro_triplet(n):
    return make_macro("vix", np.full(n, 20.0)), make_macro("risk_free", np.full(n, 1.0)), make_macro(
        "credit_spread", np.full(n, 3.0)
    )


def test_calendar_is_intersection():
    rng = np.random.default_rng(0)
    a = make_bars(random_walk(rng, 400))
    b = make_bars(random_walk(rng, 390))
    panel = align_panel({"A": a, "B": b}, {"A": "Technology", "B": "Energy"}, *_macro_triplet(400))
    assert panel.n_days == 390
    assert panel.prices.shape == (2, 390)
    assert np.isnan(panel.returns[:, 0]).all()
    assert np.allclose(panel.returns[:, 1:], np.log(panel.prices[:, 1:] / panel.prices[:, :-1]))


def test_vix_gap_forward_filled():
    rng = np.random.default_rng(1)
    bars = make_bars(random_walk(rng, 320))
    vix, rf, cs = _macro_triplet(320)
    vals = np.arange(320, dtype=float)
    keep = np.ones(320, bool)
    keep[100] = False  # a mid-week hole
    vix = make_macro("vix", vals[keep], dates=vix.dates[keep])
    panel = align_panel({"A": bars}, {"A": "Technology"}, vix, rf, cs)
    assert panel.vix[100] == 99.0
    assert panel.vix[101] == 101.0


def test_stale_macro_rejected():
    rng = np.random.default_rng(2)
    bars = make_bars(random_walk(rng, 320))
    vix, rf, cs = _macro_triplet(320)
    keep = np.ones(320, bool)
    keep[100:110] = False
    with pytest.raises(MacroGapTooLarge):
        align_panel({"A": bars}, {"A": "Technology"}, make_macro("vix", vix.values[keep], dates=vix.dates[keep]), rf, cs)


def test_short_history_rejected():
    rng = np.random.default_rng(3)
    with pytest.raises(InsufficientHistory):
        align_panel({"A": make_bars(random_walk(rng, 100))}, {"A": "Technology"}, *_macro_triplet(100))


def test_disjoint_calendars_rejected():
    rng = np.random.default_rng(4)
    a = make_bars(random_walk(rng, 300), start="2015-01-05")
    b = make_bars(random_walk(rng, 300), start="2020-01-06")
    with pytest.raises(EmptyCalendarIntersection):
        align_panel({"A": a, "B": b}, {"A": "Technology", "B": "Energy"}, *_macro_triplet(300), min_history=300)


def test_panel_round_trip(tmp_path, planted_panel):
    panel, _ = planted_panel
    manifest = write_panel(tmp_path, panel, {"scenario": "planted-signal"})
    entries, meta = load_manifest(manifest)
    assert meta == {"scenario": "planted-signal"}
    assert len(entries) == panel.n_assets + 3
    back = load_panel(manifest)
    assert back.tickers == panel.tickers and back.sectors == panel.sectors
    assert np.array_equal(back.calendar, panel.calendar)
    assert np.array_equal(back.prices, panel.prices)
    assert np.array_equal(back.vix, panel.vix)
    assert np.array_equal(back.credit_spread, panel.credit_spread)


def test_macro_loader(tmp_path):
    p = tmp_path / "vix.csv"
    p.write_text("date,value\n2021-01-05,21.5\n2021-01-04,20\n")
    s = load_macro_csv(p, "vix")
    assert list(s.values) == [20.0, 21.5]
    p.write_text("date,value\n2021-01-05,21.5\n2021-01-05,20\n")
    with pytest.raises(DuplicateDate):
        load_macro_csv(p, "vix")
