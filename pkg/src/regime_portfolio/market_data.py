"""CSV ingestion, calendar alignment and log returns."""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateDate,
    EmptyCalendarIntersection,
    InsufficientHistory,
    MacroGapTooLarge,
    MissingColumn,
    NonPositivePrice,
    UnknownSector,
    UnparsableRow,
)

SECTORS: tuple[str, ...] = (
    "Technology",
    "Financials",
    "Industrials",
    "Energy",
    "Consumer",
    "Healthcare",
    "Utilities",
)
OHLCV_COLUMNS: tuple[str, ...] = ("date", "open", "high", "low", "close", "adj_close", "volume")
MACRO_COLUMNS: tuple[str, ...] = ("date", "value")
MACRO_TICKERS = {"^VIX": "vix", "^RF": "risk_free", "^OAS": "credit_spread"}

MIN_HISTORY = 300
MAX_MACRO_STALENESS_DAYS = 5


@dataclass(frozen=True)
class OhlcvBar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    adj_close: float
    volume: float


@dataclass(frozen=True)
class MacroSeries:
    """Date-indexed macro level (VIX points, annual percent rate or spread)."""

    name: str
    dates: np.ndarray  # datetime64[D], strictly increasing
    values: np.ndarray

    def __post_init__(self) -> None:
        if len(self.dates) != len(self.values):
            raise ValueError(f"{self.name}: dates and values differ in length")
        if not np.all(np.isfinite(self.values)):
            raise UnparsableRow(f"{self.name}: non-finite value")
        if len(self.dates) > 1 and not np.all(np.diff(self.dates).astype(np.int64) > 0):
            raise DuplicateDate(f"{self.name}: dates are not strictly increasing")


@dataclass(frozen=True)
class MarketPanel:
    """Aligned panel. Matrices are asset x date; ``returns[:, 0]`` is NaN."""

    calendar: np.ndarray
    tickers: tuple[str, ...]
    sectors: tuple[str, ...]
    prices: np.ndarray
    returns: np.ndarray
    vix: np.ndarray
    risk_free: np.ndarray
    credit_spread: np.ndarray
    ohlcv: Mapping[str, np.ndarray] | None = field(default=None, compare=False)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    @property
    def n_days(self) -> int:
        return len(self.calendar)

    def sector_codes(self) -> np.ndarray:
        return np.array([SECTORS.index(s) for s in self.sectors], dtype=np.int64)

    def truncated(self, end: int) -> "MarketPanel":
        """Panel restricted to the first ``end`` dates."""
        ohlcv = None if self.ohlcv is None else {k: v[:, :end] for k, v in self.ohlcv.items()}
        return MarketPanel(
            calendar=self.calendar[:end],
            tickers=self.tickers,
            sectors=self.sectors,
            prices=self.prices[:, :end],
            returns=self.returns[:, :end],
            vix=self.vix[:end],
            risk_free=self.risk_free[:end],
            credit_spread=self.credit_spread[:end],
            ohlcv=ohlcv,
        )

    def with_prices(self, prices: np.ndarray) -> "MarketPanel":
        """Copy with new adj_close prices and recomputed returns."""
        returns = np.full_like(prices, np.nan)
        returns[:, 1:] = np.log(prices[:, 1:] / prices[:, :-1])
        return MarketPanel(
            self.calendar, self.tickers, self.sectors, prices, returns,
            self.vix, self.risk_free, self.credit_spread,
        )

    def asset_bars(self, i: int) -> list[OhlcvBar]:
        cols = self.ohlcv or {}
        adj = self.prices[i]
        get = lambda name: cols[name][i] if name in cols else adj  # noqa: E731
        o, h, lo, c = get("open"), get("high"), get("low"), get("close")
        vol = cols["volume"][i] if "volume" in cols else np.zeros_like(adj)
        return [
            OhlcvBar(_to_date(d), float(o[t]), float(h[t]), float(lo[t]), float(c[t]), float(adj[t]), float(vol[t]))
            for t, d in enumerate(self.calendar)
        ]

    def macro(self, name: str) -> MacroSeries:
        return MacroSeries(name, self.calendar.copy(), getattr(self, name).copy())


def _to_date(d: np.datetime64) -> dt.date:
    return d.astype("datetime64[D]").astype(dt.date)


def _parse_float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise UnparsableRow(f"{where}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise UnparsableRow(f"{where}: non-finite value {text!r}")
    return value


def _parse_date(text: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise UnparsableRow(f"{where}: cannot parse date {text!r}") from None


def _read_rows(path: Path, required: Sequence[str]) -> list[tuple[int, dict[str, str]]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        reader.fieldnames = header
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(row.get(c) is None for c in required):
                raise UnparsableRow(f"{path} row {lineno}: wrong number of fields")
            rows.append((lineno, row))
    return rows


def load_ohlcv_csv(path: str | Path, ticker: str, sector: str) -> list[OhlcvBar]:
    """Read one asset's daily bars, sorted by date.

    Raises ``MissingColumn``, ``NonPositivePrice``, ``DuplicateDate`` or
    ``UnparsableRow``; row-level errors name the file line.
    """
    path = Path(path)
    if sector not in SECTORS:
        raise UnknownSector(f"{ticker}: sector {sector!r} not in {SECTORS}")
    bars: dict[dt.date, OhlcvBar] = {}
    for lineno, row in _read_rows(path, OHLCV_COLUMNS):
        where = f"{path} row {lineno} ({ticker})"
        date = _parse_date(row["date"], where)
        o, h, lo, c, adj = (_parse_float(row[k], where) for k in ("open", "high", "low", "close", "adj_close"))
        volume = _parse_float(row["volume"], where)
        for name, value in (("open", o), ("high", h), ("low", lo), ("close", c), ("adj_close", adj)):
            if value <= 0:
                raise NonPositivePrice(f"{where}: {name} = {value} is not positive")
        if volume < 0:
            raise UnparsableRow(f"{where}: negative volume {volume}")
        if lo > min(o, c) or h < max(o, c):
            raise UnparsableRow(f"{where}: high/low inconsistent with open/close")
        if date in bars:
            raise DuplicateDate(f"{where}: duplicate date {date.isoformat()}")
        bars[date] = OhlcvBar(date, o, h, lo, c, adj, volume)
    return [bars[d] for d in sorted(bars)]


def load_macro_csv(path: str | Path, name: str) -> MacroSeries:
    path = Path(path)
    seen: dict[dt.date, float] = {}
    for lineno, row in _read_rows(path, MACRO_COLUMNS):
        where = f"{path} row {lineno} ({name})"
        date = _parse_date(row["date"], where)
        if date in seen:
            raise DuplicateDate(f"{where}: duplicate date {date.isoformat()}")
        seen[date] = _parse_float(row["value"], where)
    dates = sorted(seen)
    return MacroSeries(
        name,
        np.array(dates, dtype="datetime64[D]"),
        np.array([seen[d] for d in dates], dtype=float),
    )


@dataclass(frozen=True)
class ManifestEntry:
    ticker: str
    sector: str
    path: Path


def load_manifest(path: str | Path) -> tuple[list[ManifestEntry], dict[str, str]]:
    """Parse ``ticker,sector,path`` rows plus ``# key: value`` metadata lines.

    Paths are resolved relative to the manifest's directory. Macro series use
    the reserved tickers ``^VIX``, ``^RF`` and ``^OAS`` with sector ``macro``.
    """
    path = Path(path)
    meta: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") and ":" in line:
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
    entries = [
        ManifestEntry(row["ticker"].strip(), row["sector"].strip(), (path.parent / row["path"].strip()))
        for _, row in _read_rows(path, ("ticker", "sector", "path"))
    ]
    return entries, meta


def compute_log_returns(prices: Sequence[float] | np.ndarray) -> np.ndarray:
    """``r_t = ln(P_t / P_{t-1})``; output is one shorter than the input."""
    p = np.asarray(prices, dtype=float)
    if np.any(~(p > 0)):
        bad = int(np.flatnonzero(~(p > 0))[0])
        raise NonPositivePrice(f"price at position {bad} is {p[bad]}")
    return np.log(p[1:] / p[:-1])


def _fill_macro(series: MacroSeries, calendar: np.ndarray) -> np.ndarray:
    # last observation dated <= each calendar day
    pos = np.searchsorted(series.dates, calendar, side="right") - 1
    if np.any(pos < 0):
        first = calendar[int(np.flatnonzero(pos < 0)[0])]
        raise MacroGapTooLarge(f"{series.name}: no observation on or before {first}")
    stale = (calendar - series.dates[pos]).astype(np.int64)
    if np.any(stale > MAX_MACRO_STALENESS_DAYS):
        k = int(np.flatnonzero(stale > MAX_MACRO_STALENESS_DAYS)[0])
        raise MacroGapTooLarge(f"{series.name}: value for {calendar[k]} is {stale[k]} days stale")
    return series.values[pos].astype(float)


def align_panel(
    bars: Mapping[str, Sequence[OhlcvBar]],
    sectors: Mapping[str, str],
    vix: MacroSeries,
    risk_free: MacroSeries,
    credit_spread: MacroSeries,
    min_history: int = MIN_HISTORY,
) -> MarketPanel:
    """Join per-asset bars on the intersection of their dates.

    Macro series are forward-filled onto the resulting calendar, carrying a
    value at most ``MAX_MACRO_STALENESS_DAYS`` calendar days.
    """
    tickers = tuple(bars)
    for ticker in tickers:
        if len(bars[ticker]) < min_history:
            raise InsufficientHistory(f"{ticker}: {len(bars[ticker])} bars, need {min_history}")
        if sectors[ticker] not in SECTORS:
            raise UnknownSector(f"{ticker}: sector {sectors[ticker]!r} not in {SECTORS}")
    common: set[dt.date] | None = None
    for ticker in tickers:
        dates = {b.date for b in bars[ticker]}
        common = dates if common is None else common & dates
    if not common:
        raise EmptyCalendarIntersection("assets share no trading dates")
    days = sorted(common)
    calendar = np.array(days, dtype="datetime64[D]")
    index = {d: k for k, d in enumerate(days)}

    cols = ("open", "high", "low", "close", "adj_close", "volume")
    mats = {c: np.empty((len(tickers), len(days))) for c in cols}
    for i, ticker in enumerate(tickers):
        for b in bars[ticker]:
            k = index.get(b.date)
            if k is not None:
                for c in cols:
                    mats[c][i, k] = getattr(b, c)
    prices = mats.pop("adj_close")
    returns = np.full_like(prices, np.nan)
    returns[:, 1:] = np.log(prices[:, 1:] / prices[:, :-1])
    return MarketPanel(
        calendar=calendar,
        tickers=tickers,
        sectors=tuple(sectors[t] for t in tickers),
        prices=prices,
        returns=returns,
        vix=_fill_macro(vix, calendar),
        risk_free=_fill_macro(risk_free, calendar),
        credit_spread=_fill_macro(credit_spread, calendar),
        ohlcv=mats,
    )


def load_panel(manifest_path: str | Path, min_history: int = MIN_HISTORY) -> MarketPanel:
    """Load every file named in a manifest and align them."""
    entries, _ = load_manifest(manifest_path)
    bars: dict[str, list[OhlcvBar]] = {}
    sectors: dict[str, str] = {}
    macro: dict[str, MacroSeries] = {}
    for e in entries:
        if e.ticker in MACRO_TICKERS:
            name = MACRO_TICKERS[e.ticker]
            macro[name] = load_macro_csv(e.path, name)
        else:
            bars[e.ticker] = load_ohlcv_csv(e.path, e.ticker, e.sector)
            sectors[e.ticker] = e.sector
    missing = [f"{t} ({n})" for t, n in MACRO_TICKERS.items() if n not in macro]
    if missing:
        raise MissingColumn(f"{manifest_path}: manifest lacks macro series {', '.join(missing)}")
    return align_panel(bars, sectors, macro["vix"], macro["risk_free"], macro["credit_spread"], min_history)


def write_ohlcv_csv(path: str | Path, bars: Sequence[OhlcvBar]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OHLCV_COLUMNS)
        for b in bars:
            w.writerow([b.date.isoformat(), *(repr(float(getattr(b, c))) for c in OHLCV_COLUMNS[1:])])


def write_macro_csv(path: str | Path, series: MacroSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MACRO_COLUMNS)
        for d, v in zip(series.dates, series.values):
            w.writerow([str(d), repr(float(v))])


def write_panel(out_dir: str | Path, panel: MarketPanel, meta: Mapping[str, str] | None = None) -> Path:
    """Write per-asset CSVs, macro CSVs and a manifest; returns the manifest path."""
    out = Path(out_dir)
    (out / "assets").mkdir(parents=True, exist_ok=True)
    rows = []
    for i, ticker in enumerate(panel.tickers):
        rel = f"assets/{ticker}.csv"
        write_ohlcv_csv(out / rel, panel.asset_bars(i))
        rows.append((ticker, panel.sectors[i], rel))
    for ticker, name in MACRO_TICKERS.items():
        rel = f"{name}.csv"
        write_macro_csv(out / rel, panel.macro(name))
        rows.append((ticker, "macro", rel))
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("ticker", "sector", "path"))
        w.writerows(rows)
    return manifest
