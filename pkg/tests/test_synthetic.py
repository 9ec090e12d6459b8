import dataclasses

import numpy as np
import pytest

from regime_portfolio.errors import InvalidRegimeSpec, UnknownScenario
from regime_portfolio.features import FEATURES, build_feature_matrix
from regime_portfolio.regime import classify_panel
from regime_portfolio.synthetic import RegimeParams, RegimeSpec, generate_synthetic_panel, scenario


def test_same_seed_bitwise_identical():
    a, la = generate_synthetic_panel(5, 7, 700)
    b, lb = generate_synthetic_panel(5, 7, 700)
    assert np.array_equal(a.prices, b.prices) and np.array_equal(a.vix, b.vix)
    assert np.array_equal(la, lb)
    c, _ = generate_synthetic_panel(6, 7, 700)
    assert not np.array_equal(a.prices, c.prices)


def test_high_vol_three_times_low_gives_ratio_in_band():
    spec = RegimeSpec(regimes=(RegimeParams(0.0, 0.008, 0.0), RegimeParams(0.0, 0.014, 0.0), RegimeParams(0.0, 0.024, 0.0)))
    panel, labels = generate_synthetic_panel(11, 14, 1260, spec)
    r = panel.returns[:, 1:]
    lab = labels[1:]
    ratio = r[:, lab == 2].std(ddof=1) / r[:, lab == 0].std(ddof=1)
    assert 2.0 <= ratio <= 4.0


def _signal_corr(name, seed=0):
    panel, _ = generate_synthetic_panel(seed, 14, 1000, scenario(name))
    fm = build_feature_matrix(panel, classify_panel(panel))
    rows = fm.has_target
    return np.corrcoef(fm.X[rows, FEATURES.index("mom_5")], fm.target[rows])[0, 1]


def test_zero_signal_has_no_correlation():
    assert abs(_signal_corr("null-signal")) < 0.05


def test_planted_signal_is_visible():
    assert _signal_corr("planted-signal") > 0.1


def test_planted_regimes_recovered():
    panel, truth = generate_synthetic_panel(2, 7, 1260)
    rs = classify_panel(panel)
    ok = rs.labeled
    assert (rs.labels[ok] == truth[ok]).mean() >= 0.8


def test_bad_specs():
    with pytest.raises(UnknownScenario):
        scenario("bull-market")
    with pytest.raises(InvalidRegimeSpec):
        generate_synthetic_panel(0, 7, 700, dataclasses.replace(RegimeSpec(), vix_levels=(30.0, 20.0, 10.0)))
    with pytest.raises(InvalidRegimeSpec):
        generate_synthetic_panel(0, 7, 100)
