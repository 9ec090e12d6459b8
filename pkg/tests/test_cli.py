import csv
import filecmp
import json

import pytest

from regime_portfolio.cli import build_parser, main
from regime_portfolio.config import KEY_HELP, echo, parse_config_text, resolve
from regime_portfolio.errors import ConfigError

FAST = ["--set", "n_estimators=3"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--scenario", "planted-signal", "--seed", "7", "--n-assets", "14", "--n-days", "700",
                 "--out", str(out)]) == 0
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_config_parsing():
    vals = parse_config_text("# run\nseed = 3\nlambda = 2.5\nkappa = inf\nsvg = false\n")
    cfg = resolve(vals, {"variant": "non-sectoral"})
    assert cfg.backtest.seed == 3 and cfg.backtest.risk_aversion == 2.5 and cfg.svg is False
    assert cfg.backtest.variant == "non-sectoral"
    assert resolve(parse_config_text(echo(cfg)), {}) == cfg
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("gamma = 1\n")
    with pytest.raises(ConfigError):
        parse_config_text("seed = many\n")
    with pytest.raises(ConfigError):
        resolve({}, {"model_kind": "svm"})


def test_help_documents_every_key(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["backtest", "--help"])
    text = capsys.readouterr().out
    assert all(key in text for key in KEY_HELP)
    for flag in ("--config", "--out", "--seed", "--variant", "--regime-method", "--cost-rate", "--lambda", "--w-max", "--kappa"):
        assert flag in text


def test_synth_is_deterministic(tmp_path):
    args = ["synth", "--scenario", "regime-flip", "--seed", "7", "--n-assets", "7", "--n-days", "650"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    files = [f for f in cmp.common_files if f != "config.resolved"]
    assert filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files, shallow=False)[1:] == ([], [])
    assert filecmp.cmpfiles(tmp_path / "a" / "assets", tmp_path / "b" / "assets",
                            sorted(f.name for f in (tmp_path / "a" / "assets").iterdir()), shallow=False)[1:] == ([], [])


def test_null_scenario_labeled(tmp_path):
    assert main(["synth", "--scenario", "null-signal", "--n-assets", "7", "--n-days", "650", "--out", str(tmp_path)]) == 0
    assert "# scenario: null-signal" in (tmp_path / "manifest.csv").read_text()


def test_unknown_scenario_is_config_error(tmp_path):
    assert main(["synth", "--scenario", "bubble", "--out", str(tmp_path)]) == 2


def test_ingest_round_trip(data_dir, tmp_path):
    assert main(["ingest", "--manifest", str(data_dir / "manifest.csv"), "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "ingest.csv")
    assert len(rows) == 15 and rows[1][2] == "700"


def test_missing_manifest_exit_code(tmp_path, capsys):
    missing = tmp_path / "nowhere" / "manifest.csv"
    assert main(["backtest", "--manifest", str(missing), "--out", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_data_exit_code(data_dir, tmp_path):
    broken = tmp_path / "data"
    broken.mkdir()
    (broken / "manifest.csv").write_text((data_dir / "manifest.csv").read_text())
    for name in ("vix.csv", "risk_free.csv", "credit_spread.csv"):
        (broken / name).write_text((data_dir / name).read_text())
    (broken / "assets").mkdir()
    for f in (data_dir / "assets").iterdir():
        (broken / "assets" / f.name).write_text(f.read_text())
    bad = sorted((broken / "assets").iterdir())[0]
    lines = bad.read_text().splitlines()
    lines[5] = lines[5].rsplit(",", 2)[0] + ",0.0," + lines[5].rsplit(",", 1)[1]
    bad.write_text("\n".join(lines) + "\n")
    assert main(["ingest", "--manifest", str(broken / "manifest.csv"), "--out", str(tmp_path / "o")]) == 3


def test_infeasible_cap_exit_code(data_dir, tmp_path):
    assert main(["backtest", "--manifest", str(data_dir / "manifest.csv"), "--w-max", "0.01",
                 "--out", str(tmp_path)] + FAST) == 4


def test_backtest_outputs_and_rerun_from_echo(data_dir, tmp_path):
    out = tmp_path / "run"
    assert main(["backtest", "--manifest", str(data_dir / "manifest.csv"), "--out", str(out),
                 "--variant", "regime-agnostic"] + FAST) == 0
    meta = json.loads((out / "run_meta.json").read_text())
    for name in ("equity.csv", "weights.csv", "report.csv", "tests.csv", "audit.csv", "benchmark.csv", "regimes.csv"):
        assert name in meta["files"]
        assert len(_rows(out / name)) > 1
    assert (out / "equity.svg").read_text().startswith("<svg")

    echoed = (out / "config.resolved").read_text().splitlines()
    default = tmp_path / "default"
    assert main(["backtest", "--manifest", str(data_dir / "manifest.csv"), "--out", str(default)] + FAST) == 0
    diff = set(echoed) ^ set((default / "config.resolved").read_text().splitlines())
    assert {line.split(" = ")[0] for line in diff} == {"variant", "out"}

    again = tmp_path / "again"
    assert main(["backtest", "--config", str(out / "config.resolved"), "--out", str(again)]) == 0
    for name in ("equity.csv", "weights.csv", "report.csv", "tests.csv", "audit.csv"):
        assert (again / name).read_bytes() == (out / name).read_bytes()


def test_train_classify_report(data_dir, tmp_path):
    m = str(data_dir / "manifest.csv")
    assert main(["classify", "--manifest", m, "--out", str(tmp_path / "c")]) == 0
    assert _rows(tmp_path / "c" / "regimes.csv")[0][:2] == ["date", "regime"]
    assert main(["train", "--manifest", m, "--out", str(tmp_path / "t")] + FAST) == 0
    for name in ("registry.json", "scaler.csv", "importance.csv"):
        assert (tmp_path / "t" / name).stat().st_size > 0
    assert main(["backtest", "--manifest", m, "--out", str(tmp_path / "b")] + FAST) == 0
    assert main(["report", "--run-dir", str(tmp_path / "b"), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()
    assert main(["report", "--out", str(tmp_path / "empty")]) == 2


def test_ablate_table(data_dir, tmp_path):
    args = ["ablate", "--manifest", str(data_dir / "manifest.csv")] + FAST
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    rows = _rows(tmp_path / "a" / "ablation.csv")
    assert rows[0] == ["variant", "TR", "SR", "MDD"]
    assert [r[0] for r in rows[1:]] == ["Full", "NonSectoral", "RegimeAgnostic"]
    assert (tmp_path / "a" / "ablation.csv").read_bytes() == (tmp_path / "b" / "ablation.csv").read_bytes()
