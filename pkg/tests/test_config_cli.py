import json

import numpy as np
import pytest

from fpme.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_PASS, main
from fpme.config import EXPERIMENTS, ConfigError, parse_config, validate
from fpme.io import fmt
from fpme.presets import PRESETS, preset


def test_minimal_config_gets_defaults():
    cfg = validate({"experiment": "basis"})
    assert cfg.operator == {"kind": "SFL", "s": 0.5}
    assert cfg.seed == 0 and cfg.evolution["grid"] == "uniform"


def test_every_preset_validates():
    assert set(PRESETS) == set(EXPERIMENTS)
    for name in EXPERIMENTS:
        validate(preset(name), name)


def test_s_out_of_range_rejected():
    with pytest.raises(ConfigError) as exc:
        validate({"experiment": "basis", "operator": {"s": 1.5}})
    assert any("s must lie in (0,1)" in e for e in exc.value.errors)


def test_rescaled_dt_limit():
    bad = {"experiment": "rates", "nonlinearity": {"m": 2.0}, "evolution": {"dt": 1.0, "rescaled": True}}
    with pytest.raises(ConfigError) as exc:
        validate(bad)
    assert any("(m-1)/2" in e for e in exc.value.errors)
    bad["evolution"]["dt"] = 0.5
    validate(bad)


def test_syntax_error_reports_position():
    with pytest.raises(ConfigError) as exc:
        parse_config('{\n  "experiment": "basis",\n  "seed": ,\n}')
    assert "line 3, column 11" in exc.value.errors[0]


def test_unknown_keys_and_all_errors_collected():
    with pytest.raises(ConfigError) as exc:
        validate({"experiment": "basis", "bogus": 1, "operator": {"s": 2, "kind": "X", "extra": 0},
                  "domain": {"n": -3}})
    errs = exc.value.errors
    assert len(errs) >= 5
    assert any("bogus" in e for e in errs) and any("operator.extra" in e for e in errs)


def test_experiment_mismatch():
    with pytest.raises(ConfigError):
        validate({"experiment": "giant"}, "basis")


def test_fmt_round_trips():
    for v in (1 / 3, np.pi * 1e-20, -2.5e300, 0.0):
        assert float(fmt(v)) == v


def test_cli_basis_outputs(tmp_path, capsys):
    assert main(["basis", "--out", str(tmp_path)]) == EXIT_PASS
    d = tmp_path / "basis"
    for name in ("mu.csv", "kernel.csv", "manifest.json", "timing.json"):
        assert (d / name).exists(), name
    assert not list(d.glob("*.partial"))
    man = json.loads((d / "manifest.json").read_text())
    assert man["passed"] and man["config"]["experiment"] == "basis"
    assert "PASS" in capsys.readouterr().out


def test_cli_config_error_exit(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"experiment": "basis", "operator": {"s": 1.5}}')
    assert main(["basis", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "s must lie in (0,1)" in capsys.readouterr().err
    assert main(["basis", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_cli_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("FPME_THREADS", "zero")
    assert main(["basis", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_numerical_failure_exit(tmp_path, monkeypatch):
    from fpme import runner
    from fpme.evolution import ResolventError

    def boom(cfg, out):
        raise ResolventError("no convergence", 1.0, 3)

    monkeypatch.setitem(runner.EXPERIMENT_FUNCS, "basis", boom)
    assert main(["basis", "--out", str(tmp_path)]) == EXIT_NUMERIC
    assert not (tmp_path / "basis" / "manifest.json").exists()


def _snapshot(d):
    return {f.name: f.read_bytes() for f in d.iterdir() if f.name != "timing.json"}


def test_cli_rerun_is_byte_identical(tmp_path):
    d = tmp_path / "interp_norm"
    assert main(["interp_norm", "--out", str(tmp_path), "--seed", "7"]) == EXIT_PASS
    first = _snapshot(d)
    assert main(["interp_norm", "--out", str(tmp_path), "--seed", "7"]) == EXIT_PASS
    assert _snapshot(d) == first
