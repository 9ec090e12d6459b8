import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.covariance import ledoit_wolf as sk_ledoit_wolf

from regime_portfolio.errors import InsufficientHistory, TooFewObservations
from regime_portfolio.regime import RegimeLabel, RegimeMethod, RegimeSeries, classify_panel
from regime_portfolio.risk import MIXED, ledoit_wolf, regime_covariance, sample_covariance

HAND = np.array([
    [0.01, -0.02, 0.03],
    [0.02, 0.01, -0.01],
    [-0.01, 0.00, 0.02],
    [0.03, -0.01, 0.01],
    [0.00, 0.02, -0.02],
])


def test_sample_covariance_hand_matrix():
    x = HAND - HAND.mean(axis=0)
    oracle = [[sum(x[t, i] * x[t, j] for t in range(5)) / 5 for j in range(3)] for i in range(3)]
    assert np.allclose(sample_covariance(HAND), oracle, atol=1e-12, rtol=0)


def test_sample_covariance_degenerate_columns():
    col = np.random.default_rng(0).normal(size=50)
    s = sample_covariance(np.column_stack([col, col]))
    assert np.allclose(s, col.var())
    s = sample_covariance(np.column_stack([col, np.full(50, 3.0)]))
    assert np.all(s[1] == 0) and np.all(s[:, 1] == 0)
    with pytest.raises(TooFewObservations):
        sample_covariance(np.ones((1, 3)))


def test_shrinkage_matches_sklearn():
    rng = np.random.default_rng(1)
    for T, N in ((30, 10), (200, 5), (12, 40)):
        X = rng.normal(size=(T, N)) @ rng.normal(size=(N, N))
        ref, ref_delta = sk_ledoit_wolf(X)
        est = ledoit_wolf(X)
        assert est.delta == pytest.approx(ref_delta, abs=1e-10)
        assert np.allclose(est.matrix, ref, atol=1e-12)


def test_scaled_identity_is_a_fixed_point():
    # rows +-e_i give S = (2/T) I exactly, so F = S
    X = np.vstack([np.eye(4), -np.eye(4)])
    est = ledoit_wolf(X)
    assert np.allclose(est.matrix, sample_covariance(X), atol=1e-15)


def test_two_rows_leave_nothing_to_estimate():
    # demeaned rows are x and -x, so every outer product equals S and b2 = 0
    X = np.random.default_rng(2).normal(size=(2, 10))
    est = ledoit_wolf(X)
    assert est.delta == 0.0 == sk_ledoit_wolf(X)[1]
    X = np.random.default_rng(2).normal(size=(3, 10))
    est = ledoit_wolf(X)
    assert est.delta > 0
    assert np.linalg.eigvalsh(est.matrix).min() > 0


def test_single_asset():
    x = np.random.default_rng(3).normal(size=(40, 1))
    assert ledoit_wolf(x).matrix[0, 0] == pytest.approx(x.var())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 60), st.integers(1, 8))
def test_shrinkage_properties(seed, T, N):
    X = np.random.default_rng(seed).normal(size=(T, N))
    est = ledoit_wolf(X)
    assert np.array_equal(est.matrix, est.matrix.T)
    assert 0.0 <= est.delta <= 1.0
    if est.delta > 0:
        assert np.linalg.eigvalsh(est.matrix).min() > 0


def test_regime_source_and_fallback(planted_panel):
    panel, _ = planted_panel
    rs = classify_panel(panel)
    t = 700
    k = int(rs.labels[t])
    est = regime_covariance(panel, rs, k, t)
    n_rows = int((rs.labels[1:t + 1] == k).sum())
    assert est.source_regime is RegimeLabel(k) and est.sample_size == n_rows

    labels = np.where(np.arange(panel.n_days) < 300, 0, 1)
    labels[-5:] = 2
    few = RegimeSeries(panel.calendar, labels, rs.tau_low, rs.tau_high, RegimeMethod.FIXED, 0)
    est = regime_covariance(panel, few, 2, panel.n_days - 1)
    assert est.source_regime == MIXED and est.sample_size == 252
    with pytest.raises(InsufficientHistory):
        regime_covariance(panel, few, 2, 30)


def test_covariance_ignores_later_rows(planted_panel):
    panel, _ = planted_panel
    rs = classify_panel(panel)
    t = 500
    panel = panel.with_prices(panel.prices.copy())  # returns recomputed the same way as the edit
    prices = panel.prices.copy()
    prices[:, t + 1:] *= 1.5
    edited = panel.with_prices(prices)
    a = regime_covariance(panel, rs, int(rs.labels[t]), t)
    b = regime_covariance(edited, rs, int(rs.labels[t]), t)
    assert np.array_equal(a.matrix, b.matrix)
