from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from optomech.cli import DEFAULTS, ConfigError, load_config, main


def run(tmp_path, *args):
    code = main([*args, "--out", str(tmp_path)])
    return code


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_cool_writes_trajectory_and_steady_state(tmp_path):
    assert run(tmp_path, "cool", "--set", "t_max=30") == 0
    header, data = read_csv(tmp_path / "cool.csv")
    assert header == ["t_tilde", "theta", "phi_B", "n_c_th", "n_m_th", "n_c", "n_m", "delta12sq"]
    summary = json.loads((tmp_path / "cool.json").read_text())
    assert data[-1, 4] == pytest.approx(summary["steady_state"]["n_m_th"], rel=1e-6)


def test_cool_without_drive_is_flat(tmp_path):
    assert run(tmp_path, "cool", "--set", "g_r=0") == 0
    _, data = read_csv(tmp_path / "cool.csv")
    assert np.all(data[:, 4] == 40.0) and np.all(data[:, 1] == 0.0)


def test_outputs_are_byte_identical_between_runs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["entangle", "--out", str(out)]) == 0
    assert (a / "entangle.csv").read_bytes() == (b / "entangle.csv").read_bytes()
    assert (a / "entangle.json").read_bytes() == (b / "entangle.json").read_bytes()


def test_entangle_reports_the_dip(tmp_path):
    assert run(tmp_path, "entangle") == 0
    summary = json.loads((tmp_path / "entangle.json").read_text())
    assert summary["min_delta12sq"] < 1.0
    assert summary["window"]["tau"] > 0


def test_entangle_from_equilibrium_below_threshold_approaches_steady_state(tmp_path):
    args = ["--set", "start=\"equilibrium\"", "--set", "zeta=0.3", "--set", "g_b=0.5", "--set", "t_max=60"]
    assert run(tmp_path, "entangle", *args) == 0
    summary = json.loads((tmp_path / "entangle.json").read_text())
    _, data = read_csv(tmp_path / "entangle.csv")
    assert data[-1, 4] == pytest.approx(summary["steady_state"]["delta12sq"], rel=1e-8)
    assert summary["window"]["tau"] == 0.0


def test_scheme_summary(tmp_path):
    assert run(tmp_path, "scheme", "--figure") == 0
    summary = json.loads((tmp_path / "scheme.json").read_text())
    assert 0 < summary["tau_below_target"] <= summary["tau_entangled"]
    assert (tmp_path / "scheme.png").stat().st_size > 0


def test_single_cell_sweep_matches_cool_steady_state(tmp_path):
    args = ["--set", "zeta_grid=[0.8]", "--set", "g_r_grid=[3.5]", "--set", "n_m_b=40"]
    assert run(tmp_path / "s", "sweep", *args) == 0
    assert run(tmp_path / "c", "cool") == 0
    _, data = read_csv(tmp_path / "s" / "sweep.csv")
    cool = json.loads((tmp_path / "c" / "cool.json").read_text())
    assert data[0, 1] == pytest.approx(cool["steady_state"]["T_eff_K"], rel=1e-12)


def test_sweep_figure(tmp_path):
    assert run(tmp_path, "sweep", "--figure") == 0
    _, data = read_csv(tmp_path / "sweep.csv")
    assert data.shape == (6, 6)
    assert (tmp_path / "sweep.png").exists()


def test_optimize_reports_bounds(tmp_path):
    assert run(tmp_path, "optimize", "--set", "targets=[0.8]") == 0
    (entry,) = json.loads((tmp_path / "optimize.json").read_text())["results"]
    assert entry["g_bound_shifted"] == pytest.approx(3.1875)
    assert entry["g_min"] >= entry["g_bound"]
    assert entry["g_opt"] > entry["g_min"]


def test_optimize_infeasible_target_exits_with_domain_code(tmp_path):
    assert run(tmp_path, "optimize", "--set", "targets=[0.05]", "--set", "g_cap=5") == 3
    (entry,) = json.loads((tmp_path / "optimize.json").read_text())["results"]
    assert "error" in entry


@pytest.mark.parametrize("sideband", ["red", "blue"])
def test_oracle_check_passes(tmp_path, sideband):
    assert run(tmp_path, "oracle-check", "--set", f'sideband="{sideband}"', "--set", "g=0.5") == 0
    report = json.loads((tmp_path / "oracle-check.json").read_text())
    assert report["self_check"] == 0.0
    assert report["moment"]["passed"]


def test_oracle_check_with_fock(tmp_path):
    args = ["--set", "n_m_b=0.2", "--set", "t_max=1", "--set", "n_points=6", "--set", "fock=true"]
    assert run(tmp_path, "oracle-check", *args) == 0
    report = json.loads((tmp_path / "oracle-check.json").read_text())
    assert report["fock"]["passed"] and report["fock"]["trace_drift"] < 1e-8


def test_strict_mode_rejects_unknown_keys(tmp_path):
    assert run(tmp_path, "cool", "--set", "bogus=1", "--strict") == 2
    assert run(tmp_path, "cool", "--set", "bogus=1", "--set", "t_max=0.5") == 0


@pytest.mark.parametrize("args", [["--set", "zeta=2"], ["--set", "g_r=-1"]])
def test_invalid_parameters_exit_with_domain_code(tmp_path, args):
    assert run(tmp_path, "cool", *args) == 3


def test_open_window_exits_with_integration_code(tmp_path):
    assert run(tmp_path, "scheme", "--set", "zeta=1", "--set", "horizon=0.1") == 4


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"g_r": 1.0, "t_max": 2.0}))
    cfg = load_config("cool", path, ["g_r=2"])
    assert cfg["g_r"] == 2 and cfg["t_max"] == 2.0
    assert cfg["zeta"] == DEFAULTS["cool"]["zeta"]


@pytest.mark.parametrize("overrides", [["novalue"], ["=3"]])
def test_malformed_overrides(overrides):
    with pytest.raises(ConfigError):
        load_config("cool", None, overrides)


def test_non_numeric_value_is_a_config_error(tmp_path):
    assert run(tmp_path, "cool", "--set", "g_r=abc") == 2
