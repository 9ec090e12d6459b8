import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regime_portfolio.errors import EmptyWindow, InsufficientWindow, POutOfRange
from regime_portfolio.regime import (
    RegimeLabel,
    RegimeMethod,
    RegimeSeries,
    ThresholdPair,
    classify_day,
    classify_series,
    empirical_quantile,
    regime_distribution,
    rolling_thresholds,
)

L, M, H = RegimeLabel


def test_quantile_of_one_to_252():
    # sort + linear interpolation at 0-based position 251 * p
    assert empirical_quantile(np.arange(1, 253), 0.33) == pytest.approx(83.83, abs=1e-12)
    assert empirical_quantile(np.arange(1, 253), 0.67) == pytest.approx(169.17, abs=1e-12)


def test_quantile_edges():
    rng = np.random.default_rng(0)
    w = rng.normal(size=50)
    assert empirical_quantile(w, 0.0) == w.min()
    assert empirical_quantile(w, 1.0) == w.max()
    assert empirical_quantile([5, 5, 5], 0.67) == 5.0
    with pytest.raises(EmptyWindow):
        empirical_quantile([], 0.5)
    with pytest.raises(POutOfRange):
        empirical_quantile([1.0], 1.5)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.floats(0, 1))
def test_quantile_matches_numpy_linear(values, p):
    assert empirical_quantile(values, p) == pytest.approx(np.quantile(values, p), rel=1e-12, abs=1e-9)


def test_rolling_thresholds():
    rng = np.random.default_rng(1)
    v = np.concatenate([rng.permutation(np.arange(1.0, 253.0)), [999.0]])
    pair = rolling_thresholds(v, 252)
    assert (pair.tau_low, pair.tau_high) == pytest.approx((83.83, 169.17), abs=1e-12)
    assert rolling_thresholds(np.full(300, 20.0), 260) == ThresholdPair(20.0, 20.0)
    with pytest.raises(InsufficientWindow):
        rolling_thresholds(np.full(100, 20.0), 100)


def test_classify_day_boundaries():
    t = ThresholdPair(17.8, 23.1)
    assert classify_day(10, t) is L
    assert classify_day(20, t) is M
    assert classify_day(23.1, t) is H
    assert classify_day(17.8, t) is M


def test_fixed_thresholds():
    rs = classify_series([10.0, 20.0, 30.0, 15.0, 25.0], RegimeMethod.FIXED)
    assert list(rs.labels) == [L, M, H, M, H]


def test_constant_vix_is_high():
    rs = classify_series(np.full(400, 20.0))
    assert (rs.labels[:252] == -1).all()
    assert (rs.labels[252:] == H).all()


def test_vectorized_matches_per_day():
    rng = np.random.default_rng(2)
    v = 20 + 5 * rng.standard_normal(500)
    for method in (RegimeMethod.ROLLING_TERCILE, RegimeMethod.ROLLING_QUARTILE):
        rs = classify_series(v, method, 252)
        for t in range(252, 500, 7):
            pair = rolling_thresholds(v, t, 252, method.quantiles)
            assert rs.tau_low[t] == pair.tau_low and rs.tau_high[t] == pair.tau_high
            assert rs.labels[t] == classify_day(v[t], pair)


def test_distribution_counts():
    labels = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
    rs = RegimeSeries(np.arange(9), labels, np.ones(9), np.ones(9), RegimeMethod.FIXED, 0)
    assert regime_distribution(rs) == (3, 3, 3)


def test_iid_vix_shares_near_thirds():
    rng = np.random.default_rng(3)
    rs = classify_series(np.exp(rng.normal(3.0, 0.3, 1260)))
    shares = np.array(regime_distribution(rs)) / rs.labeled.sum()
    assert np.all(np.abs(shares - 1 / 3) < 0.08)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(260, 399))
def test_future_edits_leave_past_labels(seed, cut):
    rng = np.random.default_rng(seed)
    v = 20 + 4 * rng.standard_normal(400)
    edited = v.copy()
    edited[cut:] = rng.uniform(5, 80, 400 - cut)
    a, b = classify_series(v), classify_series(edited)
    assert np.array_equal(a.labels[:cut], b.labels[:cut])
    assert np.array_equal(a.tau_low[:cut], b.tau_low[:cut], equal_nan=True)
