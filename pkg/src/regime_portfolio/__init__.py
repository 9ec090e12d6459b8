"""Regime-aware portfolio backtesting: VIX regimes, per-(regime, sector) tree
ensembles, Ledoit-Wolf risk and capped mean-variance allocation."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, NumericError, RegimePortfolioError  # noqa: E402

__all__ = ["ConfigError", "DataError", "NumericError", "RegimePortfolioError", "__version__"]
