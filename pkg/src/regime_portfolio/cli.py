"""Command-line entry point: ``regime-portfolio <command> [flags]``.

Every command writes ``config.resolved`` (the fully merged configuration, in the
same format ``--config`` reads) and ``run_meta.json`` into the output directory.
Neither contains timestamps, so reruns produce identical bytes.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .analytics import (
    equity_svg,
    performance_metrics,
    regime_attribution,
    report_rows,
    significance_tests,
    write_report_csv,
    write_tests_csv,
)
from .backtest import (
    ABLATION_ORDER,
    BacktestResult,
    fit_models,
    prepare,
    read_equity_csv,
    run_ablation_suite,
    run_walk_forward,
    split_indices,
    write_audit_csv,
    write_equity_csv,
    write_weights_csv,
)
from .config import KEY_HELP, RunConfig, echo, load_config_file, resolve
from .errors import ConfigError, DataError, NumericError, RegimePortfolioError
from .features import write_scaler_csv
from .forecast import Variant, importance_table, save_registry, write_importance_csv
from .market_data import MarketPanel, load_manifest, load_panel, write_panel
from .regime import RegimeLabel, classify_panel, regime_distribution, write_regimes_csv
from .synthetic import SCENARIOS, generate_synthetic_panel, scenario

log = logging.getLogger("regime_portfolio")

LAYOUT_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
ABLATION_NAMES = {Variant.FULL: "Full", Variant.NON_SECTORAL: "NonSectoral", Variant.REGIME_AGNOSTIC: "RegimeAgnostic"}

# flag -> config key
_OVERRIDE_FLAGS = {
    "manifest": "manifest",
    "out": "out",
    "seed": "seed",
    "variant": "variant",
    "regime_method": "regime_method",
    "cost_rate": "cost_rate",
    "risk_aversion": "lambda",
    "w_max": "w_max",
    "kappa": "kappa",
}


def _writer(path: Path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


class _Run:
    """Output directory bookkeeping shared by every command."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.meta: dict[str, Any] = {}

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def finish(self) -> None:
        (self.out / "config.resolved").write_text(echo(self.cfg))
        meta = {
            "layout_version": LAYOUT_VERSION,
            "package_version": __version__,
            "command": self.command,
            "files": sorted(set(self.files) | {"config.resolved", "run_meta.json"}),
            **self.meta,
        }
        (self.out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        log.info("%s: wrote %d files to %s", self.command, len(meta["files"]), self.out)


def _load(cfg: RunConfig) -> MarketPanel:
    if cfg.manifest is None:
        raise ConfigError("no manifest given (use --manifest or `manifest = ...` in the config file)")
    if not Path(cfg.manifest).is_file():
        raise ConfigError(f"manifest not found: {cfg.manifest}")
    return load_panel(cfg.manifest)


def _write_backtest_outputs(run: _Run, result: BacktestResult) -> None:
    write_equity_csv(run.path("equity.csv"), result)
    write_weights_csv(run.path("weights.csv"), result)
    write_audit_csv(run.path("audit.csv"), result)
    fh, w = _writer(run.path("benchmark.csv"))
    with fh:
        w.writerow(("date", "benchmark", "risk_free"))
        for d, b, r in zip(result.dates, result.benchmark, result.risk_free):
            w.writerow((str(d), repr(float(b)), repr(float(r))))
    _write_report(run, result.dates, result.regime, result.net, result.benchmark, result.risk_free)
    run.meta["registry_fingerprint"] = result.registry_fingerprint


def _write_report(run: _Run, dates, regimes, net, bench, rf) -> None:
    report = performance_metrics(net, rf, bench, regimes)
    attribution = regime_attribution(net, bench, regimes, rf)
    write_report_csv(run.path("report.csv"), report_rows(report, attribution))
    write_tests_csv(run.path("tests.csv"), significance_tests(net, bench))
    if run.cfg.svg:
        svg = equity_svg(dates, np.cumprod(1.0 + net), regimes, np.cumprod(1.0 + bench))
        run.path("equity.svg").write_text(svg)


def cmd_synth(cfg: RunConfig, args: argparse.Namespace) -> None:
    spec = scenario(args.scenario)
    seed = cfg.backtest.seed
    panel, labels = generate_synthetic_panel(seed, args.n_assets, args.n_days, spec)
    run = _Run("synth", cfg)
    meta = {"scenario": args.scenario, "seed": str(seed), "n_assets": str(args.n_assets), "n_days": str(args.n_days)}
    manifest = write_panel(run.out, panel, meta)
    run.files.append(manifest.name)
    run.files.extend(f"assets/{t}.csv" for t in panel.tickers)
    run.files.extend(("vix.csv", "risk_free.csv", "credit_spread.csv"))
    fh, w = _writer(run.path("true_regimes.csv"))
    with fh:
        w.writerow(("date", "regime"))
        for d, k in zip(panel.calendar, labels):
            w.writerow((str(d), RegimeLabel(k).slug))
    run.meta.update(meta)
    run.finish()


def cmd_ingest(cfg: RunConfig, args: argparse.Namespace) -> None:
    panel = _load(cfg)
    _, meta = load_manifest(cfg.manifest)
    run = _Run("ingest", cfg)
    fh, w = _writer(run.path("ingest.csv"))
    with fh:
        w.writerow(("ticker", "sector", "n_days", "first", "last", "first_close", "last_close"))
        for i, t in enumerate(panel.tickers):
            w.writerow((t, panel.sectors[i], panel.n_days, str(panel.calendar[0]), str(panel.calendar[-1]),
                        repr(float(panel.prices[i, 0])), repr(float(panel.prices[i, -1]))))
    run.meta.update({"n_assets": panel.n_assets, "n_days": panel.n_days, "manifest_meta": meta})
    run.finish()


def cmd_classify(cfg: RunConfig, args: argparse.Namespace) -> None:
    panel = _load(cfg)
    rs = classify_panel(panel, cfg.backtest.regime_method, cfg.backtest.regime_window)
    run = _Run("classify", cfg)
    write_regimes_csv(run.path("regimes.csv"), rs)
    run.meta["regime_days"] = dict(zip(("low", "medium", "high"), regime_distribution(rs)))
    run.finish()


def cmd_train(cfg: RunConfig, args: argparse.Namespace) -> None:
    panel = _load(cfg)
    bt = cfg.backtest
    a, b, _, _ = split_indices(panel, bt)
    regimes, fm = prepare(panel, bt)
    rows = fm.training_mask(a, b)
    scaled, registry = fit_models(fm, rows, bt)
    run = _Run("train", cfg)
    save_registry(run.path("registry.json"), registry)
    write_scaler_csv(run.path("scaler.csv"), registry.scaler)
    if cfg.importance:
        write_importance_csv(run.path("importance.csv"), importance_table(registry, scaled, rows, bt.seed))
    run.meta.update({"registry_fingerprint": registry.fingerprint(), "training_rows": int(rows.sum()),
                     "low_sample_cells": sum(c.low_sample for c in registry.cells.values())})
    run.finish()


def cmd_backtest(cfg: RunConfig, args: argparse.Namespace) -> None:
    panel = _load(cfg)
    result = run_walk_forward(panel, cfg.backtest)
    run = _Run("backtest", cfg)
    write_regimes_csv(run.path("regimes.csv"), result.regimes)
    _write_backtest_outputs(run, result)
    run.finish()


def cmd_ablate(cfg: RunConfig, args: argparse.Namespace) -> None:
    panel = _load(cfg)
    results = run_ablation_suite(panel, cfg.backtest)
    run = _Run("ablate", cfg)
    fh, w = _writer(run.path("ablation.csv"))
    with fh:
        w.writerow(("variant", "TR", "SR", "MDD"))
        for v in ABLATION_ORDER:
            r = results[v]
            m = performance_metrics(r.net, r.risk_free)
            sr = "" if m.sharpe is None else repr(m.sharpe)
            w.writerow((ABLATION_NAMES[v], repr(100.0 * m.total_return), sr, repr(100.0 * m.max_drawdown)))
    run.meta["registry_fingerprints"] = {v.value: results[v].registry_fingerprint for v in ABLATION_ORDER}
    run.finish()


def cmd_report(cfg: RunConfig, args: argparse.Namespace) -> None:
    """Recompute report, tests and chart from a previous backtest's output directory."""
    src = Path(args.run_dir or cfg.out)
    if not (src / "equity.csv").is_file() or not (src / "benchmark.csv").is_file():
        raise ConfigError(f"no backtest output in {src} (expected equity.csv and benchmark.csv)")
    eq = read_equity_csv(src / "equity.csv")
    with open(src / "benchmark.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    bench = np.array([float(r["benchmark"]) for r in rows])
    rf = np.array([float(r["risk_free"]) for r in rows])
    if len(bench) != len(eq["net"]):
        raise DataError("equity.csv and benchmark.csv differ in length")
    run = _Run("report", cfg)
    _write_report(run, eq["date"], eq["regime"], eq["net"], bench, rf)
    run.finish()


COMMANDS: dict[str, tuple[Callable[[RunConfig, argparse.Namespace], None], str]] = {
    "synth": (cmd_synth, "generate a synthetic panel (manifest, asset and macro CSVs, true labels)"),
    "ingest": (cmd_ingest, "load and validate a manifest; write a per-asset summary"),
    "classify": (cmd_classify, "label each day low/medium/high from VIX"),
    "train": (cmd_train, "fit the forecast models on the training window"),
    "backtest": (cmd_backtest, "run the walk-forward backtest and write all result files"),
    "ablate": (cmd_ablate, "run the Full, NonSectoral and RegimeAgnostic variants side by side"),
    "report": (cmd_report, "recompute report.csv, tests.csv and equity.svg from a backtest directory"),
}


def _key_epilog() -> str:
    width = max(len(k) for k in KEY_HELP)
    lines = ["config keys (file `key = value`; flags override the file):"]
    lines += [f"  {k.ljust(width)}  {v}" for k, v in KEY_HELP.items()]
    lines.append("exit codes: 0 ok, 2 config, 3 data, 4 numeric")
    return "\n".join(lines)


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="flat key = value config file")
    g.add_argument("--manifest", help=KEY_HELP["manifest"])
    g.add_argument("--out", help=KEY_HELP["out"])
    g.add_argument("--seed", help=KEY_HELP["seed"])
    g.add_argument("--variant", help=KEY_HELP["variant"])
    g.add_argument("--regime-method", dest="regime_method", help=KEY_HELP["regime_method"])
    g.add_argument("--cost-rate", dest="cost_rate", help=KEY_HELP["cost_rate"])
    g.add_argument("--lambda", dest="risk_aversion", help=KEY_HELP["lambda"])
    g.add_argument("--w-max", dest="w_max", help=KEY_HELP["w_max"])
    g.add_argument("--kappa", help=KEY_HELP["kappa"])
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="regime-portfolio",
        description="Regime-aware walk-forward portfolio backtests.",
        epilog=_key_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                            epilog=_key_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
        if name == "synth":
            sp.add_argument("--scenario", default="planted-signal", help=f"one of {', '.join(SCENARIOS)}")
            sp.add_argument("--n-assets", dest="n_assets", type=int, default=34)
            sp.add_argument("--n-days", dest="n_days", type=int, default=1260)
        if name == "report":
            sp.add_argument("--run-dir", dest="run_dir", help="backtest output to read (default: --out)")
    return parser


def resolve_args(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {key: getattr(args, flag) for flag, key in _OVERRIDE_FLAGS.items()}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip().replace("-", "_")] = value.strip()
    return resolve(file_values, overrides)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler, _ = COMMANDS[args.command]
    try:
        cfg = resolve_args(args)
        handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RegimePortfolioError as exc:  # pragma: no cover - every subclass is categorized above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
