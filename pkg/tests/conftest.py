import datetime as dt

import numpy as np
import pytest

from regime_portfolio.market_data import SECTORS, MacroSeries, OhlcvBar
from regime_portfolio.synthetic import business_days, generate_synthetic_panel, scenario


def make_bars(closes, start="2021-01-04"):
    days = business_days(start, len(closes))
    return [
        OhlcvBar(d.astype(dt.date), c, c, c, c, c, 1000.0)
        for d, c in zip(days, np.asarray(closes, dtype=float))
    ]


def make_macro(name, values, start="2021-01-04", dates=None):
    dates = business_days(start, len(values)) if dates is None else np.asarray(dates, dtype="datetime64[D]")
    return MacroSeries(name, dates, np.asarray(values, dtype=float))


def random_walk(rng, n, start=100.0, vol=0.01):
    return start * np.exp(np.cumsum(rng.normal(0.0, vol, n)))


@pytest.fixture(scope="session")
def planted_panel():
    # 14 assets cover every sector twice
    return generate_synthetic_panel(3, 14, 800, scenario("planted-signal"))


@pytest.fixture(scope="session")
def sectors():
    return SECTORS
