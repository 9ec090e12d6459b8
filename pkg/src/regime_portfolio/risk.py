"""Regime-conditioned covariance with Ledoit-Wolf shrinkage to a scaled identity."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InsufficientHistory, TooFewObservations
from .market_data import MarketPanel
from .regime import RegimeLabel, RegimeSeries

N_MIN = 60
FALLBACK_WINDOW = 252
MIXED = "mixed"


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    source_regime: RegimeLabel | str
    sample_size: int
    delta: float


def sample_covariance(returns: np.ndarray) -> np.ndarray:
    """Column-demeaned cross product divided by T."""
    x = np.asarray(returns, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise TooFewObservations(f"need at least 2 observations, got shape {x.shape}")
    x = x - x.mean(axis=0)
    s = x.T @ x / x.shape[0]
    return 0.5 * (s + s.T)


def ledoit_wolf(returns: np.ndarray) -> CovarianceEstimate:
    """Shrink the sample covariance towards ``(trace(S)/N) I``.

    ``delta = min(b2, d2) / d2`` with ``d2 = ||S - F||_F^2`` and
    ``b2 = T^-2 sum_t ||x_t x_t' - S||_F^2`` over demeaned rows ``x_t``.
    """
    x = np.asarray(returns, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 1:
        raise TooFewObservations(f"need T >= 2 and N >= 1, got shape {x.shape}")
    T, N = x.shape
    x = x - x.mean(axis=0)
    S = x.T @ x / T
    S = 0.5 * (S + S.T)
    F = np.trace(S) / N * np.eye(N)
    d2 = float(np.sum((S - F) ** 2))
    if d2 <= 0.0:
        return CovarianceEstimate(S, MIXED, T, 0.0)
    # sum_t ||x_t x_t' - S||^2 = sum_t ||x_t||^4 - T ||S||^2, since sum_t x_t x_t' = T S
    fourth = float(np.sum(np.sum(x * x, axis=1) ** 2))
    b2_bar = (fourth - T * float(np.sum(S * S))) / T**2
    if b2_bar <= 8 * np.finfo(float).eps * fourth / T**2:
        b2_bar = 0.0  # below the cancellation error of the subtraction above
    b2 = min(max(b2_bar, 0.0), d2)
    delta = float(np.clip(b2 / d2, 0.0, 1.0))
    out = delta * F + (1.0 - delta) * S
    return CovarianceEstimate(0.5 * (out + out.T), MIXED, T, delta)


def regime_covariance(
    panel: MarketPanel,
    regimes: RegimeSeries,
    k: int,
    t: int,
    n_min: int = N_MIN,
    fallback_window: int = FALLBACK_WINDOW,
) -> CovarianceEstimate:
    """Shrunk covariance from return rows dated ``<= t`` in regime ``k``.

    With fewer than ``n_min`` such rows the trailing ``fallback_window`` rows
    are used regardless of regime and the source is reported as mixed.
    """
    if not 0 <= t < panel.n_days:
        raise IndexError(f"day index {t} outside the calendar")
    labels = regimes.labels[1:t + 1]  # returns are undefined on day 0
    days = np.flatnonzero(labels == k) + 1
    if len(days) >= n_min:
        est = ledoit_wolf(panel.returns[:, days].T)
        return CovarianceEstimate(est.matrix, RegimeLabel(k), len(days), est.delta)
    lo = max(1, t - fallback_window + 1)
    if t + 1 - lo < n_min:
        raise InsufficientHistory(f"day {t}: {t + 1 - lo} return rows available, need {n_min}")
    est = ledoit_wolf(panel.returns[:, lo:t + 1].T)
    return CovarianceEstimate(est.matrix, MIXED, t + 1 - lo, est.delta)


def write_covariance_csv(path: str | Path, est: CovarianceEstimate, tickers: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("asset", *tickers))
        for name, row in zip(tickers, est.matrix):
            w.writerow((name, *(repr(float(v)) for v in row)))
