"""Performance metrics, regime attribution and significance tests."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special, stats

from .errors import AllZeroDifferences, PerfectCorrelation, TooFewObservations, ZeroVariance
from .regime import RegimeLabel

ANNUALIZATION = 252
VAR_LEVEL = 0.95


@dataclass(frozen=True)
class MetricsReport:
    """Ratios that are undefined (zero variance, no drawdown) are ``None``."""

    n_obs: int
    total_return: float
    annualized_return: float
    annualized_volatility: float
    sharpe: float | None
    sortino: float | None
    calmar: float | None
    max_drawdown: float
    var_95: float
    cvar_95: float
    information_ratio: float | None = None
    by_regime: dict[str, "MetricsReport"] = field(default_factory=dict)


def _ratio(num: float, den: float) -> float | None:
    if den == 0.0 or not math.isfinite(den):
        return None
    return float(num / den)


def _std(x: np.ndarray) -> float:
    # exactly constant series have zero variance, not rounding noise
    return 0.0 if np.ptp(x) == 0 else float(np.std(x, ddof=1))


def max_drawdown(returns: np.ndarray) -> float:
    """Worst peak-to-trough decline of the equity curve started at 1.0."""
    equity = np.concatenate([[1.0], np.cumprod(1.0 + np.asarray(returns, dtype=float))])
    return float(np.min(equity / np.maximum.accumulate(equity) - 1.0))


def historical_var(returns: np.ndarray, level: float = VAR_LEVEL) -> tuple[float, float]:
    """(VaR, CVaR) as return quantiles: the (1 - level) percentile and the mean at or below it."""
    r = np.sort(np.asarray(returns, dtype=float))
    h = (len(r) - 1) * (1.0 - level)
    lo = int(math.floor(h))
    hi = min(lo + 1, len(r) - 1)
    var = float(r[lo] + (h - lo) * (r[hi] - r[lo]))
    return var, float(r[r <= var].mean())


def performance_metrics(
    net: Sequence[float] | np.ndarray,
    risk_free: Sequence[float] | np.ndarray | None = None,
    benchmark: Sequence[float] | np.ndarray | None = None,
    regimes: Sequence[int] | np.ndarray | None = None,
) -> MetricsReport:
    r = np.asarray(net, dtype=float)
    if len(r) < 2:
        raise TooFewObservations(f"need at least 2 returns, got {len(r)}")
    rf = np.zeros_like(r) if risk_free is None else np.asarray(risk_free, dtype=float)
    excess = r - rf
    total = float(np.prod(1.0 + r) - 1.0)
    annual = (1.0 + total) ** (ANNUALIZATION / len(r)) - 1.0
    sd = _std(excess)
    downside = float(np.sqrt(np.mean(np.minimum(excess, 0.0) ** 2)))
    mdd = max_drawdown(r)
    var, cvar = historical_var(r)
    sharpe = _ratio(excess.mean(), sd)
    sortino = _ratio(excess.mean(), downside)
    ir = None
    if benchmark is not None:
        active = r - np.asarray(benchmark, dtype=float)
        ir = _ratio(active.mean(), _std(active))
        ir = None if ir is None else ir * math.sqrt(ANNUALIZATION)
    by_regime = {}
    if regimes is not None:
        labels = np.asarray(regimes)
        for k in RegimeLabel:
            mask = labels == k
            if mask.sum() >= 2:
                by_regime[k.slug] = performance_metrics(
                    r[mask], rf[mask], None if benchmark is None else np.asarray(benchmark)[mask]
                )
    return MetricsReport(
        n_obs=len(r),
        total_return=total,
        annualized_return=annual,
        annualized_volatility=float(np.std(r, ddof=1)) * math.sqrt(ANNUALIZATION),
        sharpe=None if sharpe is None else sharpe * math.sqrt(ANNUALIZATION),
        sortino=None if sortino is None else sortino * math.sqrt(ANNUALIZATION),
        calmar=_ratio(annual, abs(mdd)) if mdd < 0 else None,
        max_drawdown=mdd,
        var_95=var,
        cvar_95=cvar,
        information_ratio=ir,
        by_regime=by_regime,
    )


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    p_value: float
    n1: int
    n0: int
    df: float | None = None
    z: float | None = None


def _two_sided_normal(z: float) -> float:
    return float(min(1.0, 2.0 * special.ndtr(-abs(z))))


def welch_t_test(sample1, sample0) -> TestResult:
    """Unequal-variance t statistic with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(sample1, dtype=float)
    b = np.asarray(sample0, dtype=float)
    n1, n0 = len(a), len(b)
    if n1 < 2 or n0 < 2:
        raise TooFewObservations(f"welch needs >= 2 per sample, got {n1}, {n0}")
    v1 = a.var(ddof=1) / n1
    v0 = b.var(ddof=1) / n0
    if v1 + v0 == 0.0:
        raise ZeroVariance("both samples are constant")
    t = (a.mean() - b.mean()) / math.sqrt(v1 + v0)
    df = (v1 + v0) ** 2 / (v1**2 / (n1 - 1) + v0**2 / (n0 - 1))
    p = float(min(1.0, 2.0 * special.stdtr(df, -abs(t))))
    return TestResult("welch_t", float(t), p, n1, n0, df=float(df))


def jobson_korkie_test(returns1, returns0, form: str = "memmel") -> TestResult:
    """Z test for equal Sharpe ratios on paired, per-period (unannualized) returns.

    ``form="memmel"`` uses the asymptotic variance
    ``(2(1 - rho) + (SR1^2 + SR0^2 - 2 SR1 SR0 rho^2) / 2) / n``;
    ``form="ratio"`` uses ``(1 + (SR1^2 + SR0^2 - 2 rho SR1 SR0) / (2(1 - rho))) / n``.
    """
    a = np.asarray(returns1, dtype=float)
    b = np.asarray(returns0, dtype=float)
    n = len(a)
    if n != len(b):
        raise ValueError("paired series must have equal length")
    if n < 10:
        raise TooFewObservations(f"jobson-korkie needs >= 10 pairs, got {n}")
    s1, s0 = _std(a), _std(b)
    if s1 == 0.0 or s0 == 0.0:
        raise ZeroVariance("a return series is constant")
    sr1, sr0 = a.mean() / s1, b.mean() / s0
    rho = float(np.corrcoef(a, b)[0, 1])
    if 1.0 - abs(rho) < 1e-12:
        raise PerfectCorrelation(f"correlation {rho} makes the variance singular")
    if form == "memmel":
        var = (2.0 * (1.0 - rho) + 0.5 * (sr1**2 + sr0**2 - 2.0 * sr1 * sr0 * rho**2)) / n
    elif form == "ratio":
        var = (1.0 + (sr1**2 + sr0**2 - 2.0 * rho * sr1 * sr0) / (2.0 * (1.0 - rho))) / n
    else:
        raise ValueError(f"unknown form {form!r}")
    z = (sr1 - sr0) / math.sqrt(var)
    return TestResult("jobson_korkie", float(z), _two_sided_normal(z), n, n, z=float(z))


def wilcoxon_signed_rank(differences) -> TestResult:
    """Signed-rank test, normal approximation with tie and continuity corrections.

    Zero differences are dropped; ``statistic`` is ``min(W+, W-)``.
    """
    d = np.asarray(differences, dtype=float)
    d = d[d != 0.0]
    if len(d) == 0:
        raise AllZeroDifferences("every paired difference is zero")
    n = len(d)
    if n < 10:
        raise TooFewObservations(f"wilcoxon needs >= 10 nonzero differences, got {n}")
    ranks = stats.rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    mean = n * (n + 1) / 4.0
    _, ties = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(ties**3 - ties)) / 48.0
    z = max(abs(w - mean) - 0.5, 0.0) / math.sqrt(var)
    return TestResult("wilcoxon_signed_rank", w, _two_sided_normal(z), n, n, z=float(z))


def ks_two_sample(sample1, sample0) -> TestResult:
    """Two-sample KS with the asymptotic Kolmogorov p-value at ``sqrt(n1 n0/(n1+n0)) D``."""
    a = np.sort(np.asarray(sample1, dtype=float))
    b = np.sort(np.asarray(sample0, dtype=float))
    n1, n0 = len(a), len(b)
    if n1 < 10 or n0 < 10:
        raise TooFewObservations(f"ks needs >= 10 per sample, got {n1}, {n0}")
    grid = np.concatenate([a, b])
    d = float(np.max(np.abs(np.searchsorted(a, grid, side="right") / n1 - np.searchsorted(b, grid, side="right") / n0)))
    en = n1 * n0 / (n1 + n0)
    return TestResult("kolmogorov_smirnov", d, float(special.kolmogorov(math.sqrt(en) * d)), n1, n0)


def significance_tests(strategy: np.ndarray, benchmark: np.ndarray) -> list[TestResult]:
    """The four strategy-versus-benchmark tests; any that cannot run are skipped."""
    runs = (
        lambda: welch_t_test(strategy, benchmark),
        lambda: wilcoxon_signed_rank(np.asarray(strategy) - np.asarray(benchmark)),
        lambda: jobson_korkie_test(strategy, benchmark),
        lambda: ks_two_sample(strategy, benchmark),
    )
    out = []
    for run in runs:
        try:
            out.append(run())
        except (ZeroVariance, PerfectCorrelation, AllZeroDifferences, TooFewObservations):
            continue
    return out


@dataclass(frozen=True)
class RegimeAttribution:
    regime: str
    n_days: int
    strategy_return: float
    benchmark_return: float
    outperformance: float
    sharpe: float | None


def regime_attribution(
    net: np.ndarray,
    benchmark: np.ndarray,
    regimes: np.ndarray,
    risk_free: np.ndarray | None = None,
) -> dict[str, RegimeAttribution | None]:
    """Compound strategy and benchmark over each regime's days; empty regimes map to ``None``."""
    net = np.asarray(net, dtype=float)
    bench = np.asarray(benchmark, dtype=float)
    rf = np.zeros_like(net) if risk_free is None else np.asarray(risk_free, dtype=float)
    labels = np.asarray(regimes)
    out: dict[str, RegimeAttribution | None] = {}
    for k in RegimeLabel:
        mask = labels == k
        if not mask.any():
            out[k.slug] = None
            continue
        s = float(np.prod(1.0 + net[mask]) - 1.0)
        b = float(np.prod(1.0 + bench[mask]) - 1.0)
        excess = net[mask] - rf[mask]
        sharpe = _ratio(excess.mean(), _std(excess)) if mask.sum() >= 2 else None
        out[k.slug] = RegimeAttribution(
            k.slug, int(mask.sum()), s, b, s - b,
            None if sharpe is None else sharpe * math.sqrt(ANNUALIZATION),
        )
    return out


def report_rows(report: MetricsReport, attribution: dict[str, RegimeAttribution | None] | None = None) -> list[tuple[str, str]]:
    def fmt(v) -> str:
        return "" if v is None else repr(float(v))

    rows = [(k, fmt(v)) for k, v in asdict(report).items() if k not in ("by_regime", "n_obs")]
    rows.insert(0, ("n_obs", str(report.n_obs)))
    for name, att in (attribution or {}).items():
        if att is None:
            rows.append((f"regime_days[{name}]", "0"))
            continue
        rows += [
            (f"regime_days[{name}]", str(att.n_days)),
            (f"strategy_return[{name}]", fmt(att.strategy_return)),
            (f"benchmark_return[{name}]", fmt(att.benchmark_return)),
            (f"outperformance[{name}]", fmt(att.outperformance)),
            (f"sharpe[{name}]", fmt(att.sharpe)),
        ]
    return rows


def write_report_csv(path: str | Path, rows: list[tuple[str, str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("metric", "value"))
        w.writerows(rows)


def write_tests_csv(path: str | Path, tests: list[TestResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("test", "statistic", "p", "n1", "n0"))
        for t in tests:
            w.writerow((t.name, repr(t.statistic), repr(t.p_value), t.n1, t.n0))


_SHADES = {"low": "#d8ecd8", "medium": "#f6ecc8", "high": "#f4d0d0"}


def equity_svg(dates: Sequence, equity: np.ndarray, regimes: np.ndarray, benchmark_equity: np.ndarray | None = None,
               width: int = 800, height: int = 360) -> str:
    """Equity curve over regime-shaded bands, as a standalone SVG document."""
    left, right, top, bottom = 60, 20, 20, 40
    n = len(equity)
    series = [np.asarray(equity, dtype=float)]
    if benchmark_equity is not None:
        series.append(np.asarray(benchmark_equity, dtype=float))
    lo = min(float(s.min()) for s in series)
    hi = max(float(s.max()) for s in series)
    span = hi - lo or 1.0
    xw = (width - left - right) / max(n - 1, 1)

    def x(i: float) -> float:
        return left + i * xw

    def y(v: float) -> float:
        return top + (hi - v) / span * (height - top - bottom)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
             '<rect width="100%" height="100%" fill="white"/>']
    i = 0
    labels = np.asarray(regimes)
    while i < n:
        j = i
        while j + 1 < n and labels[j + 1] == labels[i]:
            j += 1
        slug = RegimeLabel(int(labels[i])).slug
        parts.append(f'<rect x="{x(i - 0.5):.2f}" y="{top}" width="{(j - i + 1) * xw:.2f}" '
                     f'height="{height - top - bottom}" fill="{_SHADES[slug]}"/>')
        i = j + 1
    for s, color in zip(series, ("#1f4e9a", "#777777")):
        pts = " ".join(f"{x(k):.2f},{y(v):.2f}" for k, v in enumerate(s))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
    ax = height - bottom
    parts.append(f'<line x1="{left}" y1="{ax}" x2="{width - right}" y2="{ax}" stroke="black"/>')
    parts.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{ax}" stroke="black"/>')
    for v in np.linspace(lo, hi, 5):
        parts.append(f'<text x="{left - 6}" y="{y(v) + 4:.2f}" font-size="10" text-anchor="end">{v:.2f}</text>')
    if n:
        parts.append(f'<text x="{left}" y="{ax + 16}" font-size="10">{dates[0]}</text>')
        parts.append(f'<text x="{width - right}" y="{ax + 16}" font-size="10" text-anchor="end">{dates[-1]}</text>')
    legend = [("strategy", "#1f4e9a")] + ([("benchmark", "#777777")] if benchmark_equity is not None else [])
    legend += [(f"{k} vol", c) for k, c in _SHADES.items()]
    for k, (name, color) in enumerate(legend):
        lx = left + 10 + k * 110
        parts.append(f'<rect x="{lx}" y="{top + 4}" width="12" height="12" fill="{color}"/>')
        parts.append(f'<text x="{lx + 16}" y="{top + 14}" font-size="10">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
