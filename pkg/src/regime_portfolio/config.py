"""Flat ``key = value`` run configuration with flag overrides.

Precedence, lowest to highest: built-in defaults, the config file, command-line
flags. Unknown keys are rejected before any computation starts.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .backtest import BacktestConfig
from .errors import ConfigError

# key -> help text; BacktestConfig fields plus run-level keys
KEY_HELP: dict[str, str] = {
    "manifest": "path to the input manifest (ticker,sector,path)",
    "out": "output directory",
    "train_start": "first training date (ISO); default: first panel date",
    "train_end": "last training date (ISO); default: day before test_start",
    "test_start": "first test date (ISO); default: 252 days before the panel end",
    "test_end": "last test date (ISO); default: last panel date",
    "regime_method": "rolling-tercile | fixed | rolling-quartile",
    "regime_window": "trailing window for rolling thresholds (days)",
    "model_kind": "random-forest | gradient-boosting",
    "variant": "full | regime-agnostic | non-sectoral",
    "lambda": "risk aversion in the mean-variance objective",
    "w_max": "per-asset weight cap",
    "kappa": "L1 turnover budget per rebalance (inf disables)",
    "cost_rate": "transaction cost per unit of L1 turnover",
    "refit": "never | monthly",
    "n_min": "minimum regime rows before the covariance falls back to a mixed window",
    "seed": "global random seed",
    "n_estimators": "trees per ensemble",
    "rf_max_depth": "random-forest tree depth",
    "min_samples_split": "random-forest minimum rows to split a node",
    "gb_max_depth": "gradient-boosting tree depth",
    "learning_rate": "gradient-boosting shrinkage",
    "svg": "write equity.svg with regime shading (true/false)",
    "importance": "write permutation importance from `train` (true/false)",
}
_ALIASES = {"lambda": "risk_aversion"}
_RUN_KEYS = ("manifest", "out", "svg", "importance")


@dataclass(frozen=True)
class RunConfig:
    backtest: BacktestConfig = field(default_factory=BacktestConfig)
    manifest: str | None = None
    out: str = "out"
    svg: bool = True
    importance: bool = True


def _parse_bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}")


def _coerce(key: str, raw: Any) -> Any:
    if key in ("svg", "importance"):
        return raw if isinstance(raw, bool) else _parse_bool(str(raw), key)
    if key in ("manifest", "out"):
        return None if raw in (None, "", "none") else str(raw)
    name = _ALIASES.get(key, key)
    ftype = {f.name: f.type for f in fields(BacktestConfig)}[name]
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
        if "None" in str(ftype):
            return None
        raise ConfigError(f"{key}: a value is required")
    text = str(raw).strip()
    try:
        if ftype == "int":
            return int(text)
        if ftype == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, _, value = (s.strip() for s in line.partition("="))
        key = key.replace("-", "_")
        if key not in KEY_HELP:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def load_config_file(path: str | Path) -> dict[str, Any]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(), str(p))


def resolve(file_values: Mapping[str, Any], overrides: Mapping[str, Any]) -> RunConfig:
    merged: dict[str, Any] = dict(file_values)
    for key, value in overrides.items():
        if value is not None:
            if key not in KEY_HELP:
                raise ConfigError(f"unknown key {key!r}")
            merged[key] = _coerce(key, value)
    run_kwargs = {k: merged.pop(k) for k in _RUN_KEYS if k in merged}
    bt_kwargs = {_ALIASES.get(k, k): v for k, v in merged.items()}
    try:
        bt = BacktestConfig(**bt_kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(backtest=bt, **run_kwargs)


def _fmt(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def echo(cfg: RunConfig) -> str:
    """Fully resolved config in the same format the loader reads."""
    lines = [f"manifest = {_fmt(cfg.manifest)}", f"out = {_fmt(cfg.out)}",
             f"svg = {_fmt(cfg.svg)}", f"importance = {_fmt(cfg.importance)}"]
    for f in fields(BacktestConfig):
        key = {v: k for k, v in _ALIASES.items()}.get(f.name, f.name)
        lines.append(f"{key} = {_fmt(getattr(cfg.backtest, f.name))}")
    return "\n".join(lines) + "\n"


def with_backtest(cfg: RunConfig, **changes: Any) -> RunConfig:
    return dataclasses.replace(cfg, backtest=dataclasses.replace(cfg.backtest, **changes))
