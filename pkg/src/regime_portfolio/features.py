"""Technical, momentum and macro features with per-regime standardization.

Indicator functions take a 1-D date-ordered series and return an array of the
same length, NaN where the indicator is not yet defined.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    CalendarMismatch,
    InsufficientHistory,
    RegimeUnseenInTraining,
    ScalerAlreadyApplied,
    TooFewRows,
)
from .market_data import SECTORS, MarketPanel
from .regime import RegimeLabel, RegimeSeries

log = logging.getLogger(__name__)

FEATURES: tuple[str, ...] = (
    "rsi_14",
    "macd_line",
    "macd_signal",
    "macd_hist",
    "boll_pctb",
    "boll_bandwidth",
    "roll_vol_20",
    "mom_5",
    "mom_10",
    "mom_20",
    "vix_level",
    "credit_spread",
)
# MACD slow EMA (26) plus signal EMA (9) burn-in; first feature row is index 35.
WARMUP = 35


def _check_len(x: np.ndarray, need: int, what: str) -> None:
    if len(x) < need:
        raise InsufficientHistory(f"{what}: {len(x)} points, need {need}")


def rsi(prices, period: int = 14) -> np.ndarray:
    """Wilder RSI; averages seeded with the simple mean of the first ``period`` changes."""
    p = np.asarray(prices, dtype=float)
    _check_len(p, period + 1, "rsi")
    d = np.diff(p)
    gain = np.clip(d, 0.0, None)
    loss = np.clip(-d, 0.0, None)
    out = np.full(len(p), np.nan)
    g = gain[:period].mean()
    lo = loss[:period].mean()
    for t in range(period, len(p)):
        if t > period:
            g = (g * (period - 1) + gain[t - 1]) / period
            lo = (lo * (period - 1) + loss[t - 1]) / period
        if lo == 0.0:
            out[t] = 100.0
        elif g == 0.0:
            out[t] = 0.0
        else:
            out[t] = 100.0 - 100.0 / (1.0 + g / lo)
    return out


def ema(x, span: int) -> np.ndarray:
    """EMA with smoothing ``2/(span+1)`` seeded by the mean of the first ``span`` defined values."""
    x = np.asarray(x, dtype=float)
    out = np.full(len(x), np.nan)
    defined = np.flatnonzero(~np.isnan(x))
    if len(defined) < span:
        return out
    start = defined[0]
    alpha = 2.0 / (span + 1)
    seed_at = start + span - 1
    out[seed_at] = x[start:seed_at + 1].mean()
    for t in range(seed_at + 1, len(x)):
        out[t] = alpha * x[t] + (1 - alpha) * out[t - 1]
    return out


def macd(prices, fast: int = 12, slow: int = 26, signal: int = 9) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = np.asarray(prices, dtype=float)
    _check_len(p, slow, "macd")
    line = ema(p, fast) - ema(p, slow)
    sig = ema(line, signal)
    return line, sig, line - sig


def bollinger(prices, window: int = 20, k: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Percent-b and bandwidth from a simple mean and population std."""
    p = np.asarray(prices, dtype=float)
    _check_len(p, window, "bollinger")
    pctb = np.full(len(p), np.nan)
    bandwidth = np.full(len(p), np.nan)
    win = np.lib.stride_tricks.sliding_window_view(p, window)
    middle = win.mean(axis=1)
    sigma = win.std(axis=1)
    flat = sigma <= 1e-12 * np.abs(middle)
    sigma = np.where(flat, 0.0, sigma)
    width = 2 * k * sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(flat, 0.5, (p[window - 1:] - (middle - k * sigma)) / width)
    pctb[window - 1:] = b
    bandwidth[window - 1:] = width / middle
    return pctb, bandwidth


def rolling_volatility(returns, window: int = 20) -> np.ndarray:
    """Sample std (ddof 1) of the trailing ``window`` returns."""
    r = np.asarray(returns, dtype=float)
    _check_len(r, window, "rolling_volatility")
    out = np.full(len(r), np.nan)
    win = np.lib.stride_tricks.sliding_window_view(r, window)
    # exactly constant windows have zero volatility, not rounding noise
    out[window - 1:] = np.where(np.ptp(win, axis=1) == 0, 0.0, win.std(axis=1, ddof=1))
    return out


def momentum(prices, k: int) -> np.ndarray:
    p = np.asarray(prices, dtype=float)
    _check_len(p, k + 1, "momentum")
    out = np.full(len(p), np.nan)
    out[k:] = p[k:] / p[:-k] - 1.0
    return out


def asset_features(prices: np.ndarray, log_returns: np.ndarray, vix: np.ndarray, credit: np.ndarray) -> np.ndarray:
    """Date x feature matrix for one asset (NaN during warm-up)."""
    line, sig, hist = macd(prices)
    pctb, bw = bollinger(prices)
    vol = np.full(len(prices), np.nan)
    vol[1:] = rolling_volatility(log_returns[1:])
    cols = [
        rsi(prices),
        line,
        sig,
        hist,
        pctb,
        bw,
        vol,
        momentum(prices, 5),
        momentum(prices, 10),
        momentum(prices, 20),
        vix,
        credit,
    ]
    return np.column_stack(cols)


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows keyed by (asset, date); ordered date-major, then by asset."""

    X: np.ndarray
    asset: np.ndarray
    date_idx: np.ndarray
    sector: np.ndarray
    regime: np.ndarray
    target: np.ndarray  # next-day log return, NaN on the final date
    calendar: np.ndarray
    tickers: tuple[str, ...]
    scaled: bool = False

    def __len__(self) -> int:
        return len(self.X)

    @property
    def has_target(self) -> np.ndarray:
        return ~np.isnan(self.target)

    def subset(self, mask: np.ndarray) -> "FeatureMatrix":
        return replace(
            self,
            X=self.X[mask],
            asset=self.asset[mask],
            date_idx=self.date_idx[mask],
            sector=self.sector[mask],
            regime=self.regime[mask],
            target=self.target[mask],
        )

    def rows_between(self, start: int, end: int) -> np.ndarray:
        """Mask of rows whose date index lies in ``[start, end]``."""
        return (self.date_idx >= start) & (self.date_idx <= end)

    def training_mask(self, start: int, end: int) -> np.ndarray:
        """Rows dated in ``[start, end]`` whose target is also dated ``<= end``."""
        return (self.date_idx >= start) & (self.date_idx + 1 <= end) & self.has_target


def build_feature_matrix(panel: MarketPanel, regimes: RegimeSeries) -> FeatureMatrix:
    if len(regimes.dates) != panel.n_days or not np.array_equal(regimes.dates, panel.calendar):
        raise CalendarMismatch("regime series and panel calendars differ")
    n, T = panel.n_assets, panel.n_days
    if T <= WARMUP:
        raise InsufficientHistory(f"panel has {T} days, warm-up needs {WARMUP + 1}")
    per_asset = np.stack([
        asset_features(panel.prices[i], panel.returns[i], panel.vix, panel.credit_spread) for i in range(n)
    ])  # asset x date x feature
    days = np.flatnonzero((np.arange(T) >= WARMUP) & regimes.labeled)
    date_idx = np.repeat(days, n)
    asset = np.tile(np.arange(n), len(days))
    X = per_asset[asset, date_idx]
    target = np.full(len(days) * n, np.nan)
    nxt = date_idx + 1 < T
    target[nxt] = panel.returns[asset[nxt], date_idx[nxt] + 1]
    sector = panel.sector_codes()[asset]
    return FeatureMatrix(
        X=X,
        asset=asset,
        date_idx=date_idx,
        sector=sector,
        regime=regimes.labels[date_idx],
        target=target,
        calendar=panel.calendar,
        tickers=panel.tickers,
    )


@dataclass(frozen=True)
class RegimeScaler:
    """Per-regime feature means and stds (ddof 0) fitted on training rows."""

    mean: np.ndarray  # regime x feature
    std: np.ndarray
    fitted: np.ndarray  # per regime
    degenerate: np.ndarray  # regime x feature; std forced to 1
    pooled: bool = False


def fit_regime_scaler(fm: FeatureMatrix, train_rows: np.ndarray, pooled: bool = False) -> RegimeScaler:
    """Fit standardization statistics on ``train_rows`` only.

    With ``pooled=True`` one set of statistics is fitted across all regimes and
    shared by every regime (regime-agnostic standardization).
    """
    if fm.scaled:
        raise ScalerAlreadyApplied("cannot fit a scaler on already-scaled features")
    p = fm.X.shape[1]
    mean = np.zeros((3, p))
    std = np.ones((3, p))
    fitted = np.zeros(3, dtype=bool)
    degenerate = np.zeros((3, p), dtype=bool)
    groups = [np.asarray(train_rows, bool)] if pooled else [np.asarray(train_rows, bool) & (fm.regime == k) for k in range(3)]
    for g, rows in enumerate(groups):
        count = int(rows.sum())
        if count == 0:
            continue
        if count < 2:
            raise TooFewRows(f"regime {g}: {count} training row, need 2")
        X = fm.X[rows]
        m = X.mean(axis=0)
        s = X.std(axis=0)
        flat = s <= 1e-12 * np.maximum(1.0, np.abs(m))
        targets = range(3) if pooled else (g,)
        for k in targets:
            mean[k], std[k] = m, np.where(flat, 1.0, s)
            degenerate[k] = flat
            fitted[k] = True
        for j in np.flatnonzero(flat):
            log.warning("degenerate feature %s in regime %s; std forced to 1", FEATURES[j], "pooled" if pooled else RegimeLabel(g).slug)
    return RegimeScaler(mean, std, fitted, degenerate, pooled)


def apply_scaler(scaler: RegimeScaler, fm: FeatureMatrix) -> FeatureMatrix:
    if fm.scaled:
        raise ScalerAlreadyApplied("feature matrix is already scaled")
    unseen = sorted({int(k) for k in np.unique(fm.regime) if not scaler.fitted[k]})
    if unseen:
        names = ", ".join(RegimeLabel(k).slug for k in unseen)
        raise RegimeUnseenInTraining(f"no training rows for regime(s): {names}")
    X = (fm.X - scaler.mean[fm.regime]) / scaler.std[fm.regime]
    return replace(fm, X=X, scaled=True)


def unscale(scaler: RegimeScaler, fm: FeatureMatrix) -> FeatureMatrix:
    if not fm.scaled:
        raise ValueError("feature matrix is not scaled")
    return replace(fm, X=fm.X * scaler.std[fm.regime] + scaler.mean[fm.regime], scaled=False)


def write_feature_csv(path: str | Path, fm: FeatureMatrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("asset", "date", "sector", "regime", *FEATURES, "target"))
        for r in range(len(fm)):
            w.writerow((
                fm.tickers[fm.asset[r]],
                str(fm.calendar[fm.date_idx[r]]),
                SECTORS[fm.sector[r]],
                RegimeLabel(fm.regime[r]).slug,
                *(repr(float(v)) for v in fm.X[r]),
                "" if np.isnan(fm.target[r]) else repr(float(fm.target[r])),
            ))


def write_scaler_csv(path: str | Path, scaler: RegimeScaler) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("regime", "feature", "mean", "std", "degenerate"))
        for k in range(3):
            if not scaler.fitted[k]:
                continue
            for j, name in enumerate(FEATURES):
                w.writerow((RegimeLabel(k).slug, name, repr(float(scaler.mean[k, j])), repr(float(scaler.std[k, j])), int(scaler.degenerate[k, j])))
