import dataclasses

import numpy as np
import pytest

from regime_portfolio.backtest import (
    BacktestConfig,
    apply_transaction_costs,
    daily_risk_free,
    drift_weights,
    read_equity_csv,
    run_ablation_suite,
    run_walk_forward,
    split_indices,
    turnover_series,
    write_equity_csv,
)
from regime_portfolio.errors import ConfigError, InfeasibleBox
from regime_portfolio.forecast import Variant

FAST = BacktestConfig(n_estimators=10, test_start="2022-08-01")


@pytest.fixture(scope="module")
def result(planted_panel):
    panel, _ = planted_panel
    return run_walk_forward(panel, FAST)


def test_cost_arithmetic():
    w = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert turnover_series(w).tolist() == [0.0, 2.0]
    assert apply_transaction_costs(np.zeros(2), w, 0.001).tolist() == [0.0, -0.002]
    assert np.array_equal(apply_transaction_costs(np.ones(2), w, 0.0), np.ones(2))


def test_buy_and_hold_is_free_after_drift():
    rng = np.random.default_rng(0)
    simple = rng.normal(0, 0.01, (5, 30))
    w = np.full(5, 0.2)
    held, prior = [], []
    for t in range(30):
        prior.append(w)
        held.append(w)
        w = drift_weights(w, simple[:, t])
    cost = apply_transaction_costs(np.zeros(30), np.array(held), 0.001, np.array(prior))
    assert np.all(cost == 0.0)


def test_risk_free_conversion():
    assert daily_risk_free(np.array([2.52]))[0] == pytest.approx(0.0001)


def test_config_validation():
    with pytest.raises(ConfigError):
        BacktestConfig(variant="sectorless")
    with pytest.raises(ConfigError):
        BacktestConfig(cost_rate=-1)
    with pytest.raises(ConfigError):
        BacktestConfig(train_end="2022-01-05", test_start="2022-01-03")


def test_default_split_is_last_year(planted_panel):
    panel, _ = planted_panel
    a, b, c, d = split_indices(panel, BacktestConfig())
    assert (a, b, c, d) == (0, panel.n_days - 253, panel.n_days - 252, panel.n_days - 1)


def test_accounting(result, planted_panel):
    panel, _ = planted_panel
    assert np.allclose(result.weights.sum(axis=1), 1.0, atol=1e-12)
    assert result.weights.min() >= 0 and result.weights.max() <= 0.15 + 1e-15
    assert np.array_equal(result.net, result.gross - result.cost)
    eq = 1.0
    for j in range(len(result.net)):
        eq *= 1.0 + result.net[j]
        assert result.equity[j] == pytest.approx(eq, rel=1e-12)
    assert result.cost[0] == 0.0
    assert np.allclose(result.cost, 0.001 * result.turnover)
    # gross return is the held weights times the next day's simple returns
    c = int(np.searchsorted(panel.calendar, result.dates[0]))
    simple = np.expm1(panel.returns)
    assert result.gross[3] == pytest.approx(result.weights[3] @ simple[:, c + 4], abs=1e-15)
    assert all(row.converged and row.kkt_residual < 1e-6 for row in result.audit)


def test_constant_prices_give_flat_equity(planted_panel):
    panel, _ = planted_panel
    flat = panel.with_prices(np.full_like(panel.prices, 50.0))
    flat = dataclasses.replace(flat, vix=panel.vix, risk_free=panel.risk_free)
    res = run_walk_forward(flat, dataclasses.replace(FAST, n_estimators=2))
    assert np.all(res.gross == 0.0)
    assert np.all(res.equity == np.cumprod(1 - res.cost))


def test_turnover_budget_respected(planted_panel):
    panel, _ = planted_panel
    res = run_walk_forward(panel, dataclasses.replace(FAST, kappa=0.1))
    assert np.all(np.abs(np.diff(res.weights, axis=0)).sum(axis=1) <= 0.1 + 1e-12)
    assert np.allclose(res.weights.sum(axis=1), 1.0, atol=1e-12)


def test_costs_monotone_in_rate(planted_panel):
    panel, _ = planted_panel
    equity = [run_walk_forward(panel, dataclasses.replace(FAST, cost_rate=r)).equity[-1] for r in (0.0, 0.001, 0.005)]
    assert equity[0] > equity[1] > equity[2]


def test_infeasible_cap(planted_panel):
    panel, _ = planted_panel
    with pytest.raises(InfeasibleBox):
        run_walk_forward(panel, dataclasses.replace(FAST, w_max=0.05))


def test_future_edit_changes_nothing_before_it(planted_panel, result):
    panel, _ = planted_panel
    edit_day = int(np.searchsorted(panel.calendar, result.dates[100]))
    prices = panel.prices.copy()
    prices[:, edit_day:] *= np.random.default_rng(1).uniform(0.8, 1.2, prices[:, edit_day:].shape)
    base = run_walk_forward(panel.with_prices(panel.prices.copy()), FAST)
    edited = run_walk_forward(panel.with_prices(prices), FAST)
    assert base.registry_fingerprint == edited.registry_fingerprint
    # the decision at edit_day - 1 is made before the edit; its payoff is not
    assert np.array_equal(base.weights[:100], edited.weights[:100])


def test_monthly_refit(planted_panel):
    panel, _ = planted_panel
    res = run_walk_forward(panel, dataclasses.replace(FAST, refit="monthly", n_estimators=3))
    assert "+" in res.registry_fingerprint


def test_ablation_shares_calendar_and_regimes(planted_panel):
    panel, _ = planted_panel
    out = run_ablation_suite(panel, dataclasses.replace(FAST, n_estimators=3))
    assert list(out) == [Variant.FULL, Variant.NON_SECTORAL, Variant.REGIME_AGNOSTIC]
    first = out[Variant.FULL]
    for r in out.values():
        assert np.array_equal(r.dates, first.dates) and np.array_equal(r.regime, first.regime)


def test_equity_csv_round_trip(tmp_path, result):
    write_equity_csv(tmp_path / "e.csv", result)
    back = read_equity_csv(tmp_path / "e.csv")
    assert np.array_equal(back["net"], result.net) and np.array_equal(back["equity"], result.equity)
    assert np.array_equal(back["regime"], result.regime)
