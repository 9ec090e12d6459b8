"""VIX-driven volatility regime classification."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyWindow, InsufficientWindow, POutOfRange

DEFAULT_WINDOW = 252
FIXED_THRESHOLDS = (15.0, 25.0)


class RegimeLabel(enum.IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def slug(self) -> str:
        return self.name.lower()


class RegimeMethod(str, enum.Enum):
    ROLLING_TERCILE = "rolling-tercile"
    FIXED = "fixed"
    ROLLING_QUARTILE = "rolling-quartile"

    @property
    def quantiles(self) -> tuple[float, float] | None:
        return {
            RegimeMethod.ROLLING_TERCILE: (0.33, 0.67),
            RegimeMethod.ROLLING_QUARTILE: (0.25, 0.75),
        }.get(self)


@dataclass(frozen=True)
class ThresholdPair:
    tau_low: float
    tau_high: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.tau_low) and np.isfinite(self.tau_high)):
            raise ValueError("thresholds must be finite")
        if not (0 < self.tau_low <= self.tau_high):
            raise ValueError(f"invalid thresholds ({self.tau_low}, {self.tau_high})")


@dataclass(frozen=True)
class RegimeSeries:
    """Per-date labels; ``labels == -1`` and NaN thresholds mark warm-up days."""

    dates: np.ndarray
    labels: np.ndarray
    tau_low: np.ndarray
    tau_high: np.ndarray
    method: RegimeMethod
    window: int
    quantile_convention: str = "linear"

    @property
    def labeled(self) -> np.ndarray:
        return self.labels >= 0

    @property
    def first_labeled(self) -> int:
        idx = np.flatnonzero(self.labeled)
        return int(idx[0]) if len(idx) else len(self.labels)

    def relabeled(self, labels: np.ndarray) -> "RegimeSeries":
        return RegimeSeries(self.dates, labels, self.tau_low, self.tau_high, self.method, self.window)


def empirical_quantile(window: Sequence[float] | np.ndarray, p: float) -> float:
    """Linear-interpolation quantile (rank ``h = (n-1)p + 1``)."""
    values = np.asarray(window, dtype=float)
    if values.size == 0:
        raise EmptyWindow("quantile of an empty window")
    if not 0.0 <= p <= 1.0:
        raise POutOfRange(f"p = {p} outside [0, 1]")
    return float(_sorted_quantile(np.sort(values)[None, :], p)[0])


def _sorted_quantile(sorted_rows: np.ndarray, p: float) -> np.ndarray:
    n = sorted_rows.shape[1]
    h = (n - 1) * p
    lo = int(np.floor(h))
    hi = min(lo + 1, n - 1)
    frac = h - lo
    return sorted_rows[:, lo] + frac * (sorted_rows[:, hi] - sorted_rows[:, lo])


def rolling_thresholds(
    vix: Sequence[float] | np.ndarray,
    t: int,
    window: int = DEFAULT_WINDOW,
    quantiles: tuple[float, float] = (0.33, 0.67),
) -> ThresholdPair:
    """Thresholds for day index ``t`` from the ``window`` values before it.

    Day ``t`` itself is excluded so its own VIX never moves its thresholds.
    """
    v = np.asarray(vix, dtype=float)
    if t < window or t > len(v):
        raise InsufficientWindow(f"day {t}: need {window} prior observations, have {min(t, len(v))}")
    w = np.sort(v[t - window:t])[None, :]
    return ThresholdPair(float(_sorted_quantile(w, quantiles[0])[0]), float(_sorted_quantile(w, quantiles[1])[0]))


def classify_day(v: float, thresholds: ThresholdPair) -> RegimeLabel:
    if v < thresholds.tau_low:
        return RegimeLabel.LOW
    if v < thresholds.tau_high:
        return RegimeLabel.MEDIUM
    return RegimeLabel.HIGH


def _classify(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.where(v < lo, 0, np.where(v < hi, 1, 2)).astype(np.int64)


def classify_series(
    vix: Sequence[float] | np.ndarray,
    method: RegimeMethod | str = RegimeMethod.ROLLING_TERCILE,
    window: int = DEFAULT_WINDOW,
    dates: np.ndarray | None = None,
) -> RegimeSeries:
    method = RegimeMethod(method)
    v = np.asarray(vix, dtype=float)
    n = len(v)
    if dates is None:
        dates = np.arange(n)
    labels = np.full(n, -1, dtype=np.int64)
    lo = np.full(n, np.nan)
    hi = np.full(n, np.nan)
    if method is RegimeMethod.FIXED:
        lo[:], hi[:] = FIXED_THRESHOLDS
        labels[:] = _classify(v, lo, hi)
        return RegimeSeries(dates, labels, lo, hi, method, 0)
    if n <= window:
        raise InsufficientWindow(f"{method.value}: series of {n} days, need more than {window}")
    # row j is the window for day window + j, i.e. values [j, window + j)
    windows = np.sort(np.lib.stride_tricks.sliding_window_view(v, window)[:-1], axis=1)
    q_lo, q_hi = method.quantiles
    lo[window:] = _sorted_quantile(windows, q_lo)
    hi[window:] = _sorted_quantile(windows, q_hi)
    labels[window:] = _classify(v[window:], lo[window:], hi[window:])
    return RegimeSeries(dates, labels, lo, hi, method, window)


def regime_distribution(rs: RegimeSeries) -> tuple[int, int, int]:
    labeled = rs.labels[rs.labeled]
    counts = np.bincount(labeled, minlength=3)
    return int(counts[0]), int(counts[1]), int(counts[2])


def write_regimes_csv(path: str | Path, rs: RegimeSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date", "regime", "tau_low", "tau_high", "method"))
        for d, k, lo, hi in zip(rs.dates, rs.labels, rs.tau_low, rs.tau_high):
            if k >= 0:
                w.writerow((str(d), RegimeLabel(k).slug, repr(float(lo)), repr(float(hi)), rs.method.value))


def classify_panel(panel, method: RegimeMethod | str = RegimeMethod.ROLLING_TERCILE, window: int = DEFAULT_WINDOW) -> RegimeSeries:
    """``classify_series`` over a panel's VIX, keyed by its calendar."""
    return classify_series(panel.vix, method, window, dates=panel.calendar)
