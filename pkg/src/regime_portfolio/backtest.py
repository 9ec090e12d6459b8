"""Walk-forward daily backtest: classify, predict, estimate risk, allocate, execute at t+1."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .allocate import AllocationProblem, allocate
from .errors import ConfigError, InfeasibleBox, RegimeUnseenInTraining
from .features import FeatureMatrix, apply_scaler, build_feature_matrix, fit_regime_scaler
from .forecast import BoostingParams, ForestParams, ModelKind, ModelRegistry, Variant, predict_next_day, train_registry
from .market_data import MarketPanel
from .regime import RegimeLabel, RegimeMethod, RegimeSeries, classify_panel
from .risk import MIXED, regime_covariance

log = logging.getLogger(__name__)

TRADING_DAYS = 252


@dataclass(frozen=True)
class BacktestConfig:
    train_start: str | None = None
    train_end: str | None = None
    test_start: str | None = None
    test_end: str | None = None
    regime_method: str = RegimeMethod.ROLLING_TERCILE.value
    regime_window: int = 252
    model_kind: str = ModelKind.RANDOM_FOREST.value
    variant: str = Variant.FULL.value
    risk_aversion: float = 1.0
    w_max: float = 0.15
    kappa: float = float("inf")
    cost_rate: float = 0.001
    refit: str = "never"
    n_min: int = 60
    seed: int = 42
    n_estimators: int = 100
    rf_max_depth: int = 10
    min_samples_split: int = 5
    gb_max_depth: int = 6
    learning_rate: float = 0.1

    def __post_init__(self) -> None:
        try:
            RegimeMethod(self.regime_method)
            ModelKind(self.model_kind)
            Variant(self.variant)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.refit not in ("never", "monthly"):
            raise ConfigError(f"refit must be 'never' or 'monthly', got {self.refit!r}")
        if self.cost_rate < 0:
            raise ConfigError("cost_rate must be >= 0")
        if not 0 < self.w_max <= 1:
            raise ConfigError("w_max must be in (0, 1]")
        if not self.kappa >= 0:
            raise ConfigError("kappa must be >= 0")
        if self.risk_aversion <= 0:
            raise ConfigError("risk_aversion must be positive")
        if self.n_min < 2 or self.regime_window < 2 or self.n_estimators < 0:
            raise ConfigError("n_min and regime_window must be >= 2, n_estimators >= 0")
        if self.train_end and self.test_start and np.datetime64(self.train_end) >= np.datetime64(self.test_start):
            raise ConfigError("train_end must precede test_start")

    @property
    def forest(self) -> ForestParams:
        return ForestParams(self.n_estimators, self.rf_max_depth, self.min_samples_split, self.seed)

    @property
    def boosting(self) -> BoostingParams:
        return BoostingParams(self.n_estimators, self.learning_rate, self.gb_max_depth, 2, self.seed)


@dataclass(frozen=True)
class AuditRow:
    date: str
    regime: str
    iterations: int
    converged: bool
    kkt_residual: float
    objective: float
    delta: float
    sample_size: int
    covariance_source: str
    turnover_applied: bool


@dataclass(frozen=True)
class BacktestResult:
    """Per decision date ``t``: weights chosen at the close of ``t`` and the
    return they earn over ``(t, t+1]``."""

    dates: np.ndarray
    tickers: tuple[str, ...]
    weights: np.ndarray  # date x asset
    regime: np.ndarray
    gross: np.ndarray
    cost: np.ndarray
    net: np.ndarray
    turnover: np.ndarray
    equity: np.ndarray  # equity after each day; starts from 1.0
    benchmark: np.ndarray  # equal-weight simple return of the universe
    risk_free: np.ndarray  # daily decimal
    config: BacktestConfig
    registry_fingerprint: str
    regimes: RegimeSeries = field(repr=False)
    audit: tuple[AuditRow, ...] = field(default=(), repr=False)
    registry: ModelRegistry | None = field(default=None, repr=False, compare=False)


def daily_risk_free(annual_percent: np.ndarray) -> np.ndarray:
    """Annualized percent rate to a daily decimal rate."""
    return np.asarray(annual_percent, dtype=float) / 100.0 / TRADING_DAYS


def drift_weights(w: np.ndarray, simple_returns: np.ndarray) -> np.ndarray:
    """Weights after one period of price moves, renormalized to sum to one."""
    grown = w * (1.0 + simple_returns)
    return grown / grown.sum()


def turnover_series(weights: np.ndarray, prior: np.ndarray | None = None) -> np.ndarray:
    """L1 trade size per row; without ``prior`` the previous row is used and day one is free."""
    w = np.asarray(weights, dtype=float)
    if prior is None:
        prior = np.vstack([w[:1], w[:-1]])
    return np.abs(w - prior).sum(axis=1)


def apply_transaction_costs(gross: np.ndarray, weights: np.ndarray, rate: float, prior: np.ndarray | None = None) -> np.ndarray:
    """``net_t = gross_t - rate * ||w_t - prior_t||_1``."""
    if rate < 0:
        raise ValueError("cost rate must be >= 0")
    return np.asarray(gross, dtype=float) - rate * turnover_series(weights, prior)


def _index(calendar: np.ndarray, date: str | None, default: int, side: str) -> int:
    if date is None:
        return default
    d = np.datetime64(date, "D")
    if side == "start":
        return int(np.searchsorted(calendar, d, side="left"))
    return int(np.searchsorted(calendar, d, side="right")) - 1


def split_indices(panel: MarketPanel, config: BacktestConfig) -> tuple[int, int, int, int]:
    """(train_start, train_end, test_start, test_end) day indices, inclusive."""
    T = panel.n_days
    test_start = _index(panel.calendar, config.test_start, max(T - TRADING_DAYS, 0), "start")
    test_end = _index(panel.calendar, config.test_end, T - 1, "end")
    train_start = _index(panel.calendar, config.train_start, 0, "start")
    train_end = _index(panel.calendar, config.train_end, test_start - 1, "end")
    if not (0 <= train_start <= train_end < test_start < test_end <= T - 1):
        raise ConfigError(
            f"invalid split: train [{train_start}, {train_end}], test [{test_start}, {test_end}] on {T} days"
        )
    return train_start, train_end, test_start, test_end


def fit_models(fm: FeatureMatrix, train_rows: np.ndarray, config: BacktestConfig) -> tuple[FeatureMatrix, ModelRegistry]:
    variant = Variant(config.variant)
    seen = set(np.unique(fm.regime[train_rows]).tolist())
    missing = [RegimeLabel(k).slug for k in range(3) if k not in seen]
    if missing:
        raise RegimeUnseenInTraining(f"training window lacks regime(s): {', '.join(missing)}")
    scaler = fit_regime_scaler(fm, train_rows, pooled=variant is Variant.REGIME_AGNOSTIC)
    scaled = apply_scaler(scaler, fm)
    registry = train_registry(
        scaled, train_rows, variant, config.model_kind, scaler, config.seed, config.forest, config.boosting
    )
    return scaled, registry


def prepare(panel: MarketPanel, config: BacktestConfig) -> tuple[RegimeSeries, FeatureMatrix]:
    regimes = classify_panel(panel, config.regime_method, config.regime_window)
    return regimes, build_feature_matrix(panel, regimes)


def run_walk_forward(
    panel: MarketPanel,
    config: BacktestConfig,
    prepared: tuple[RegimeSeries, FeatureMatrix] | None = None,
) -> BacktestResult:
    """Train on the training window only, then trade every test day but the last."""
    n = panel.n_assets
    if n * config.w_max < 1 - 1e-12:
        raise InfeasibleBox(f"{n} assets with w_max {config.w_max} cannot be fully invested")
    a, b, c, d = split_indices(panel, config)
    regimes, fm = prepared or prepare(panel, config)
    if regimes.first_labeled > c:
        raise ConfigError("test window starts before regime labels are available")
    scaled, registry = fit_models(fm, fm.training_mask(a, b), config)
    fingerprints = [registry.fingerprint()]

    rf = daily_risk_free(panel.risk_free)
    simple = np.expm1(panel.returns)
    row_start = np.searchsorted(fm.date_idx, np.arange(panel.n_days + 1), side="left")

    days = np.arange(c, d)  # the final test date makes no trade
    m = len(days)
    weights = np.empty((m, n))
    gross = np.empty(m)
    cost = np.zeros(m)
    turnover = np.zeros(m)
    audit = []
    prev = np.full(n, 1.0 / n)
    for j, t in enumerate(days):
        if config.refit == "monthly" and j > 0 and _new_month(panel.calendar, t):
            scaled, registry = fit_models(fm, fm.training_mask(a, t), config)
            fingerprints.append(registry.fingerprint())
        k = int(regimes.labels[t])
        rows = scaled.subset(slice(row_start[t], row_start[t + 1]))
        forecast = predict_next_day(registry, rows)
        mu_ex = np.empty(n)
        mu_ex[rows.asset] = forecast - rf[t]
        cov = regime_covariance(panel, regimes, k, t, config.n_min)
        res = allocate(AllocationProblem(mu_ex, cov.matrix, config.risk_aversion, config.w_max, config.kappa, prev))
        w = res.weights
        if j > 0:
            drifted = drift_weights(weights[j - 1], simple[:, t])
            turnover[j] = float(np.abs(w - drifted).sum())
            cost[j] = config.cost_rate * turnover[j]
        weights[j] = w
        gross[j] = float(w @ simple[:, t + 1])
        prev = w
        source = cov.source_regime.slug if cov.source_regime != MIXED else MIXED
        audit.append(AuditRow(str(panel.calendar[t]), RegimeLabel(k).slug, res.iterations, res.converged,
                              res.kkt_residual, res.objective, cov.delta, cov.sample_size, source, res.turnover_applied))

    net = gross - cost
    equity = np.cumprod(1.0 + net)
    return BacktestResult(
        dates=panel.calendar[days],
        tickers=panel.tickers,
        weights=weights,
        regime=regimes.labels[days],
        gross=gross,
        cost=cost,
        net=net,
        turnover=turnover,
        equity=equity,
        benchmark=simple[:, days + 1].mean(axis=0),
        risk_free=rf[days],
        config=config,
        registry_fingerprint=fingerprints[0] if len(fingerprints) == 1 else "+".join(fingerprints),
        regimes=regimes,
        audit=tuple(audit),
        registry=registry,
    )


def _new_month(calendar: np.ndarray, t: int) -> bool:
    return calendar[t].astype("datetime64[M]") != calendar[t - 1].astype("datetime64[M]")


ABLATION_ORDER = (Variant.FULL, Variant.NON_SECTORAL, Variant.REGIME_AGNOSTIC)


def run_ablation_suite(panel: MarketPanel, base_config: BacktestConfig) -> dict[Variant, BacktestResult]:
    """Three backtests sharing panel, dates, regimes and seed; only the variant differs."""
    prepared = prepare(panel, base_config)
    return {v: run_walk_forward(panel, replace(base_config, variant=v.value), prepared) for v in ABLATION_ORDER}


def _fmt(x: float) -> str:
    return repr(float(x))


def write_equity_csv(path: str | Path, result: BacktestResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date", "regime", "gross", "cost", "net", "equity"))
        for i, date in enumerate(result.dates):
            w.writerow((str(date), RegimeLabel(result.regime[i]).slug, _fmt(result.gross[i]),
                        _fmt(result.cost[i]), _fmt(result.net[i]), _fmt(result.equity[i])))


def write_weights_csv(path: str | Path, result: BacktestResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date", *result.tickers))
        for date, row in zip(result.dates, result.weights):
            w.writerow((str(date), *(_fmt(x) for x in row)))


def write_audit_csv(path: str | Path, result: BacktestResult) -> None:
    names = [f.name for f in fields(AuditRow)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in result.audit:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in asdict(row).values()])


def read_equity_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {"date": np.array([r["date"] for r in rows], dtype="datetime64[D]"),
           "regime": np.array([RegimeLabel[r["regime"].upper()] for r in rows], dtype=np.int64)}
    for col in ("gross", "cost", "net", "equity"):
        out[col] = np.array([float(r[col]) for r in rows])
    return out
