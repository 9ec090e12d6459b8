"""Exception hierarchy.

Every error carries a ``category`` (``config``, ``data`` or ``numeric``) so the
command-line layer can map failures onto distinct exit codes.
"""
from __future__ import annotations


class RegimePortfolioError(Exception):
    category = "numeric"


class ConfigError(RegimePortfolioError, ValueError):
    category = "config"


class DataError(RegimePortfolioError, ValueError):
    category = "data"


class NumericError(RegimePortfolioError, ArithmeticError):
    category = "numeric"


# --- market data -----------------------------------------------------------
class MissingColumn(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class DuplicateDate(DataError):
    pass


class UnparsableRow(DataError):
    pass


class InsufficientHistory(DataError):
    pass


class MacroGapTooLarge(DataError):
    pass


class EmptyCalendarIntersection(DataError):
    pass


class UnknownSector(DataError):
    pass


class InvalidRegimeSpec(ConfigError):
    pass


class UnknownScenario(ConfigError):
    pass


# --- regime ----------------------------------------------------------------
class EmptyWindow(DataError):
    pass


class POutOfRange(ConfigError):
    pass


class InsufficientWindow(DataError):
    pass


# --- features / forecast ---------------------------------------------------
class CalendarMismatch(DataError):
    pass


class RegimeUnseenInTraining(DataError):
    pass


class ScalerAlreadyApplied(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class EmptyCell(DataError):
    pass


class MissingModelCell(DataError):
    pass


class UnscaledInput(DataError):
    pass


class TooFewRows(DataError):
    pass


# --- risk / allocation / analytics -----------------------------------------
class TooFewObservations(DataError):
    pass


class InfeasibleBox(NumericError):
    pass


class NonFiniteInput(NumericError):
    pass


class ZeroVariance(NumericError):
    pass


class PerfectCorrelation(NumericError):
    pass


class AllZeroDifferences(NumericError):
    pass
