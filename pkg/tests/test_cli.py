import csv
import json

import numpy as np
import pytest

from campaigns import CONFIGS, EXAMPLE_PARAMS, write_config
from frachh.cli import CAMPAIGNS, ConfigError, load_config, main, run_experiment
from frachh.formats import read_field_binary


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("campaign", CAMPAIGNS)
def test_campaign_bundle_and_rerun(tmp_path, campaign):
    cfg = write_config(tmp_path, campaign)
    a = run_experiment(campaign, cfg, tmp_path / "a")
    b = run_experiment(campaign, cfg, tmp_path / "b")
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["campaign"] == campaign and "results.csv" in manifest["outputs"]
    assert "numpy" in manifest["versions"]
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()


def test_check_params_reports_sigma(tmp_path):
    out = run_experiment("check-params", write_config(tmp_path, "check-params"), tmp_path / "o")
    table = {r[0]: r[1:] for r in rows(out / "results.csv")[1:]}
    assert table["sigma"][0] == "1/48"
    assert table["r"][0] == "8"
    assert table["accepted"][1] == "true"
    rec = json.loads((out / "manifest.json").read_text())["summary"]["acceptance"]
    assert rec["accepted"] is True


def test_check_params_rejection_listed(tmp_path):
    cfg = write_config(tmp_path, "check-params", params={**EXAMPLE_PARAMS, "H": 0.3})
    out = run_experiment("check-params", cfg, tmp_path / "o")
    table = rows(out / "results.csv")
    assert ["violated", "H > 1/2", ""] in table


def test_simulate_zero_data_gives_zero_fields(tmp_path):
    base = CONFIGS["simulate"]
    cfg = write_config(tmp_path, "simulate", params={**EXAMPLE_PARAMS, "mu": 0},
                       solver={"initial": {"profile": "zero"}, "hardy_trials": 3})
    out = run_experiment("simulate", cfg, tmp_path / "o")
    fields = sorted((out / "fields").glob("u_*.bin"))
    assert len(fields) == base["time"]["steps"] + 1
    assert all(not read_field_binary(f).values.any() for f in fields)
    summary = json.loads((out / "manifest.json").read_text())["summary"]
    assert summary["converged"] and summary["iterations"] == 1


def test_simulate_seed_flag_changes_noise(tmp_path):
    cfg = write_config(tmp_path, "simulate")
    a = run_experiment("simulate", cfg, tmp_path / "a", seed=1)
    b = run_experiment("simulate", cfg, tmp_path / "b", seed=2)
    assert (a / "results.csv").read_bytes() != (b / "results.csv").read_bytes()
    assert json.loads((a / "manifest.json").read_text())["seed"] == 1


def test_simulate_rejects_long_horizon_unless_overridden(tmp_path):
    cfg = write_config(tmp_path, "simulate", time={"horizon": 1.0, "steps": 4})
    with pytest.raises(ConfigError, match="override"):
        run_experiment("simulate", cfg, tmp_path / "a")
    out = run_experiment("simulate", cfg, tmp_path / "b", override=True)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["override_admissibility"] is True and manifest["summary"]["overridden"]


def test_simulate_auto_horizon(tmp_path):
    cfg = write_config(tmp_path, "simulate", time={"horizon": "auto", "steps": 4})
    out = run_experiment("simulate", cfg, tmp_path / "o")
    summary = json.loads((out / "manifest.json").read_text())["summary"]
    assert summary["horizon"] == summary["budget"]["T_star"] > 0


def test_sample_fbm_paths_start_at_zero(tmp_path):
    out = run_experiment("sample-fbm", write_config(tmp_path, "sample-fbm"), tmp_path / "o")
    table = rows(out / "results.csv")
    assert table[0] == ["t", "path_0", "path_1", "path_2", "path_3"]
    assert all(float(v) == 0.0 for v in table[1])
    assert len(table) == 34


def test_mc_covariance_columns(tmp_path):
    out = run_experiment("mc-covariance", write_config(tmp_path, "mc-covariance"), tmp_path / "o")
    table = rows(out / "results.csv")
    assert table[0][:2] == ["mode", "lambda"] and len(table) == 3
    assert float(table[1][1]) == 0.0


def test_sweep_lattice(tmp_path):
    out = run_experiment("sweep", write_config(tmp_path, "sweep"), tmp_path / "o")
    table = rows(out / "results.csv")
    head = table[0]
    assert len(table) == 7
    acc = [r[head.index("accepted")] for r in table[1:]]
    assert acc.count("true") == 2  # q in {6, 12} with H = 0.75


def test_verify_campaigns_report_bounds(tmp_path):
    out = run_experiment("verify-kernel", write_config(tmp_path, "verify-kernel"), tmp_path / "k")
    assert len(rows(out / "results.csv")) > 1
    out = run_experiment("verify-smoothing", write_config(tmp_path, "verify-smoothing"), tmp_path / "s")
    assert len(rows(out / "results.csv")) == 1 + 2 * 3  # one row per pair and time


def test_config_errors(tmp_path):
    cfg = write_config(tmp_path, "check-params")
    with pytest.raises(ConfigError, match="unknown campaign"):
        run_experiment("bogus", cfg, tmp_path / "o")
    named = write_config(tmp_path, "sweep", campaign={"name": "simulate", "lattice": {"q": [6]}})
    with pytest.raises(ConfigError, match="not 'sweep'"):
        run_experiment("sweep", named, tmp_path / "o")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    extra = tmp_path / "extra.json"
    extra.write_text(json.dumps({"params": EXAMPLE_PARAMS, "plots": {}}))
    with pytest.raises(ConfigError, match="plots"):
        load_config(extra)


def test_main_exit_codes(tmp_path, capsys):
    cfg = write_config(tmp_path, "check-params")
    assert main(["check-params", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert capsys.readouterr().out.strip().endswith("manifest.json")
    assert main(["check-params", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["bogus", "--config", str(cfg), "--out", str(tmp_path)])


def test_params_parsed_exactly(tmp_path):
    cfg = load_config(write_config(tmp_path, "check-params"))
    from fractions import Fraction

    assert cfg["params"]["gamma"] == Fraction(1, 2)
    assert np.isclose(float(cfg["params"]["H"]), 0.75)
