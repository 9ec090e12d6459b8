"""Seeded regime-switching panels with a planted linear alpha.

Returns follow a regime-switching log-normal scheme with a common market
factor. The designated feature (5-day momentum) at day ``t`` feeds into the
return at ``t + 1`` with a coefficient set by the regime of day ``t`` and the
asset's sector. VIX sits at a regime-specific level with multiplicative noise,
so trailing terciles recover the planted schedule.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidRegimeSpec, UnknownScenario
from .market_data import SECTORS, MarketPanel

SIGNAL_FEATURE = "mom_5"
SIGNAL_LAG = 5


@dataclass(frozen=True)
class RegimeParams:
    drift: float  # daily log drift
    vol: float  # daily log-return volatility
    signal: float  # coefficient on the planted feature


@dataclass(frozen=True)
class RegimeSpec:
    regimes: tuple[RegimeParams, RegimeParams, RegimeParams] = (
        RegimeParams(0.0006, 0.008, 0.15),
        RegimeParams(0.0003, 0.014, 0.15),
        RegimeParams(-0.0002, 0.024, 0.15),
    )
    vix_levels: tuple[float, float, float] = (13.0, 20.0, 32.0)
    vix_noise: float = 0.06
    block_range: tuple[int, int] = (10, 30)
    market_loading: float = 0.5
    sector_signal: tuple[float, ...] = (1.0,) * len(SECTORS)
    schedule: tuple[int, ...] | None = None
    start: str = "2020-01-02"
    name: str = "custom"

    def validate(self, n_days: int) -> None:
        if len(self.regimes) != 3 or len(self.vix_levels) != 3:
            raise InvalidRegimeSpec("exactly three regimes are required")
        if any(r.vol <= 0 or not np.isfinite(r.drift) for r in self.regimes):
            raise InvalidRegimeSpec("regime vols must be positive and drifts finite")
        if any(abs(r.signal) * SIGNAL_LAG >= 1 for r in self.regimes):
            raise InvalidRegimeSpec("|signal| * 5 must stay below 1 for a stationary process")
        if not (0 < self.vix_levels[0] < self.vix_levels[1] < self.vix_levels[2]):
            raise InvalidRegimeSpec("vix levels must be increasing")
        lo, hi = self.block_range
        if not (1 <= lo <= hi):
            raise InvalidRegimeSpec(f"bad block range {self.block_range}")
        if not 0 <= self.market_loading < 1:
            raise InvalidRegimeSpec("market loading must be in [0, 1)")
        if len(self.sector_signal) != len(SECTORS):
            raise InvalidRegimeSpec("sector_signal needs one multiplier per sector")
        if self.schedule is not None:
            sched = np.asarray(self.schedule)
            if len(sched) != n_days or not np.isin(sched, (0, 1, 2)).all():
                raise InvalidRegimeSpec("schedule must label every day with 0, 1 or 2")


def _flat(params: tuple[RegimeParams, ...], signal: tuple[float, float, float]) -> tuple[RegimeParams, ...]:
    return tuple(replace(p, signal=s) for p, s in zip(params, signal))


_BASE = RegimeSpec()
SCENARIOS: dict[str, RegimeSpec] = {
    "planted-signal": replace(_BASE, name="planted-signal"),
    "null-signal": replace(_BASE, regimes=_flat(_BASE.regimes, (0.0, 0.0, 0.0)), name="null-signal"),
    "regime-flip": replace(_BASE, regimes=_flat(_BASE.regimes, (0.18, -0.18, 0.18)), name="regime-flip"),
    "sector-flip": replace(
        _BASE,
        regimes=_flat(_BASE.regimes, (0.15, 0.15, 0.15)),
        sector_signal=(1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0),
        name="sector-flip",
    ),
}


def scenario(name: str) -> RegimeSpec:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


def planted_schedule(rng: np.random.Generator, n_days: int, block_range: tuple[int, int]) -> np.ndarray:
    """Blocks cycling through shuffled (low, medium, high) rounds."""
    out = np.empty(n_days, dtype=np.int64)
    pos = 0
    while pos < n_days:
        for k in rng.permutation(3):
            length = int(rng.integers(block_range[0], block_range[1] + 1))
            out[pos:pos + length] = k
            pos += length
            if pos >= n_days:
                break
    return out


def business_days(start: str, n: int) -> np.ndarray:
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n), roll="forward")


def generate_synthetic_panel(
    seed: int,
    n_assets: int = 34,
    n_days: int = 1260,
    regime_spec: RegimeSpec | None = None,
) -> tuple[MarketPanel, np.ndarray]:
    """Generate a panel and its true regime labels; bitwise deterministic per seed."""
    spec = regime_spec or _BASE
    if n_days < 600:
        raise InvalidRegimeSpec(f"n_days = {n_days}, need at least 600")
    if n_assets < 1:
        raise InvalidRegimeSpec("need at least one asset")
    spec.validate(n_days)
    rng = np.random.default_rng(seed)

    if spec.schedule is not None:
        labels = np.asarray(spec.schedule, dtype=np.int64)
    else:
        labels = planted_schedule(rng, n_days, spec.block_range)

    sector_idx = np.arange(n_assets) % len(SECTORS)
    sectors = tuple(SECTORS[s] for s in sector_idx)
    sector_mult = np.asarray(spec.sector_signal)[sector_idx]
    drift = np.array([r.drift for r in spec.regimes])
    vol = np.array([r.vol for r in spec.regimes])
    signal = np.array([r.signal for r in spec.regimes])

    market = rng.standard_normal(n_days)
    idio = rng.standard_normal((n_assets, n_days))
    a = spec.market_loading
    shocks = a * market[None, :] + np.sqrt(1 - a * a) * idio

    returns = np.full((n_assets, n_days), np.nan)
    logp = np.empty((n_assets, n_days))
    logp[:, 0] = np.log(rng.uniform(20.0, 200.0, n_assets))
    for t in range(1, n_days):
        k = labels[t]
        r = drift[k] + vol[k] * shocks[:, t]
        if t - 1 >= SIGNAL_LAG:
            # log momentum keeps the feedback linear, so 5 * |signal| < 1 is enough for stationarity
            mom = logp[:, t - 1] - logp[:, t - 1 - SIGNAL_LAG]
            r = r + signal[labels[t - 1]] * sector_mult * mom
        returns[:, t] = r
        logp[:, t] = logp[:, t - 1] + r
    prices = np.exp(logp)

    levels = np.asarray(spec.vix_levels)[labels]
    noise = np.empty(n_days)
    noise[0] = rng.standard_normal()
    eps = rng.standard_normal(n_days)
    for t in range(1, n_days):
        noise[t] = 0.5 * noise[t - 1] + np.sqrt(0.75) * eps[t]
    vix = levels * np.exp(spec.vix_noise * noise)
    credit = 3.0 + 0.5 * np.cumsum(rng.standard_normal(n_days)) / np.sqrt(n_days)
    risk_free = np.clip(1.5 + 0.5 * np.cumsum(rng.standard_normal(n_days)) / np.sqrt(n_days), 0.0, None)

    day_vol = vol[labels][None, :]
    open_ = np.empty_like(prices)
    open_[:, 0] = prices[:, 0]
    open_[:, 1:] = prices[:, :-1] * np.exp(0.3 * day_vol[:, 1:] * rng.standard_normal((n_assets, n_days - 1)))
    wick = np.exp(np.abs(0.5 * day_vol * rng.standard_normal((2, n_assets, n_days))))
    high = np.maximum(open_, prices) * wick[0]
    low = np.minimum(open_, prices) / wick[1]
    volume = np.floor(rng.lognormal(14.0, 0.5, (n_assets, n_days)))

    panel = MarketPanel(
        calendar=business_days(spec.start, n_days),
        tickers=tuple(f"S{i:02d}" for i in range(n_assets)),
        sectors=sectors,
        prices=prices,
        returns=returns,
        vix=vix,
        risk_free=risk_free,
        credit_spread=credit,
        ohlcv={"open": open_, "high": high, "low": low, "close": prices.copy(), "volume": volume},
    )
    return panel, labels
