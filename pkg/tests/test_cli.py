import json
import os

import numpy as np
import pytest

from exitflow.cli import main
from exitflow.config import (ConfigError, build_problem, config_digest,
                             load_config, probe_indices, resolve_config)


def _base_config(**overrides):
    cfg = {
        "grid": {"left": 0.0, "right": 1.0, "n_interior": 19},
        "actions": {"kind": "discrete",
                    "values": [-1.0, -0.5, 0.0, 0.5, 1.0]},
        "lq": {"b_bar": 0.0, "b_hat": 1.0, "c_bar": 0.1, "c_hat": 0.0,
               "f_bar": 1.0, "f_tilde": 0.0, "f_hat": 1.0},
        "sigma": 1.4142135623730951,
        "g": 0.0,
        "seed": 99,
    }
    cfg.update(overrides)
    return cfg


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_resolve_round_trip():
    resolved = resolve_config(_base_config(hjb={"taus": [0.5]}))
    again = resolve_config(json.loads(json.dumps(resolved)))
    assert again == resolved
    assert config_digest(again) == config_digest(resolved)


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="grid.n_interor"):
        resolve_config({"grid": {"left": 0.0, "right": 1.0,
                                 "n_interor": 9}})


def test_missing_key_named():
    with pytest.raises(ConfigError, match="actions.kind"):
        resolve_config({"actions": {"values": [1.0]}})


def test_bad_value_named():
    with pytest.raises(ConfigError, match="grid.n_interior"):
        resolve_config({"grid": {"left": 0.0, "right": 1.0,
                                 "n_interior": 0}})


def test_polynomial_coefficients():
    cfg = _base_config()
    cfg["sigma"] = [1.0, 0.5]  # 1 + x/2
    prob = build_problem(resolve_config(cfg))
    assert abs(prob.sigma(0.4) - 1.2) <= 1e-15


def test_probe_snapping():
    prob = build_problem(resolve_config(_base_config()))
    idx = probe_indices(prob.grid, [0.5, 0.501])
    assert idx.size == 1
    assert abs(prob.grid.interior[idx[0]] - 0.5) <= prob.grid.spacing / 2


def test_solve_hjb_outputs(tmp_path):
    cfg = _write(tmp_path, _base_config(hjb={"taus": [0.5, 0.1]}))
    out = str(tmp_path / "run")
    assert main(["solve-hjb", "--config", cfg, "--out", out]) == 0
    names = sorted(os.listdir(out))
    assert "hjb_tau_0.csv" in names
    assert "hjb_tau_0p5.csv" in names
    assert "hjb_tau_0p1.csv" in names
    assert "solve-hjb-manifest.json" in names
    manifest = json.loads((tmp_path / "run" / "solve-hjb-manifest.json")
                          .read_text())
    assert manifest["seed"] == 99
    assert len(manifest["outputs"]) == 6
    resolved = resolve_config(manifest["resolved_config"])
    assert config_digest(resolved) == manifest["config_digest"]


def test_zero_data_hjb_files(tmp_path):
    cfg = _base_config(hjb={"taus": [0.3]})
    cfg["lq"] = {k: 0.0 for k in cfg["lq"]}
    cfg["lq"]["f_hat"] = 1.0
    cfg["lq"]["f_bar"] = 0.0
    cfg["actions"] = {"kind": "discrete", "values": [0.0]}
    path = _write(tmp_path, cfg)
    out = str(tmp_path / "zero")
    assert main(["solve-hjb", "--config", path, "--out", out]) == 0
    rows = (tmp_path / "zero" / "hjb_tau_0p3.csv").read_text().splitlines()
    vals = [float(r.split(",")[1]) for r in rows[1:]]
    assert max(abs(v) for v in vals) <= 1e-12


def test_malformed_config_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, {"grid": {"left": 0.0, "right": 1.0,
                                     "n_interior": 9, "bogus_key": 1}})
    assert main(["solve-hjb", "--config", cfg,
                 "--out", str(tmp_path / "x")]) == 1
    assert "bogus_key" in capsys.readouterr().err


def test_run_flow_monotone_and_reproducible(tmp_path):
    cfg = _write(tmp_path, _base_config(
        flow={"scheduler": {"kind": "constant", "tau": 0.5}, "horizon": 1.0,
              "dt": 0.05, "record_every": 4, "probes": [0.5]}))
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    assert main(["run-flow", "--config", cfg, "--out", out_a]) == 0
    assert main(["run-flow", "--config", cfg, "--out", out_b]) == 0
    traj_a = (tmp_path / "a" / "flow_trajectory.csv").read_bytes()
    traj_b = (tmp_path / "b" / "flow_trajectory.csv").read_bytes()
    assert traj_a == traj_b
    lines = traj_a.decode().splitlines()
    v_reg = [float(r.split(",")[2]) for r in lines[1:]]
    assert all(b <= a + 1e-8 for a, b in zip(v_reg, v_reg[1:]))
    for name in ("flow_z_final.csv", "flow_error_decomposition.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_run_flow_restart_roundtrip(tmp_path):
    cfg_dict = _base_config(
        flow={"scheduler": {"kind": "constant", "tau": 0.5}, "horizon": 0.5,
              "dt": 0.05, "record_every": 10, "probes": [0.5]})
    cfg = _write(tmp_path, cfg_dict)
    out = str(tmp_path / "first")
    assert main(["run-flow", "--config", cfg, "--out", out]) == 0
    cfg_dict["flow"]["z0"] = os.path.join(out, "flow_z_final.csv")
    cfg2 = _write(tmp_path, cfg_dict, name="cfg2.json")
    assert main(["run-flow", "--config", cfg2,
                 "--out", str(tmp_path / "second")]) == 0


def test_sweep_bounds_small_grid(tmp_path):
    cfg = _write(tmp_path, {"bounds": {"beta_grid": [0.5], "s_grid": [10.0]},
                            "seed": 1})
    out = str(tmp_path / "sw")
    assert main(["sweep-bounds", "--config", cfg, "--out", out]) == 0
    rows = (tmp_path / "sw" / "figure_bounds.csv").read_text().splitlines()
    assert len(rows) == 2  # header + single point


def test_sweep_bounds_bias_sweep_csv(tmp_path):
    cfg = _write(tmp_path, {"bounds": {
        "beta_grid": [0.5], "s_grid": [10.0],
        "bias_sweep": {"taus": [0.1, 0.01], "p_grid": [-1.0, 0.0, 2.0]}}})
    out = str(tmp_path / "bs")
    assert main(["sweep-bounds", "--config", cfg, "--out", out]) == 0
    rows = (tmp_path / "bs" / "bias_sweep.csv").read_text().splitlines()
    assert rows[0] == "tau,p,soft,hard,gap,gap_over_tau_log"
    assert len(rows) == 1 + 2 * 3
    for r in rows[1:]:
        tau, p, soft, hard, gap, ratio = map(float, r.split(","))
        assert gap >= -1e-12
        assert abs(gap - (soft - hard)) <= 1e-15


def test_run_flow_optimal_start(tmp_path):
    cfg = _write(tmp_path, _base_config(
        flow={"scheduler": {"kind": "constant", "tau": 0.5}, "horizon": 0.2,
              "dt": 0.05, "record_every": 2, "probes": [0.5],
              "z0": "optimal"}))
    out = str(tmp_path / "opt")
    assert main(["run-flow", "--config", cfg, "--out", out]) == 0
    lines = (tmp_path / "opt" / "flow_error_decomposition.csv") \
        .read_text().splitlines()
    # optimization error starts at the fixed point: essentially zero
    first_opt = float(lines[1].split(",")[3])
    assert abs(first_opt) <= 1e-8


def test_sweep_bounds_empty_grid_rejected(tmp_path):
    cfg = _write(tmp_path, {"bounds": {"beta_grid": [], "s_grid": [10.0]}})
    assert main(["sweep-bounds", "--config", cfg,
                 "--out", str(tmp_path / "x")]) == 1


def test_reproduce_figure_defaults(tmp_path):
    out = str(tmp_path / "fig")
    assert main(["reproduce-figure", "--out", out]) == 0
    rows = (tmp_path / "fig" / "figure_bounds.csv").read_text().splitlines()
    assert len(rows) == 1 + 19 * 4
    vals = [float(r.split(",")[2]) for r in rows[1:]]
    assert all(np.isfinite(vals))


def test_mc_check_pass_and_csv(tmp_path):
    cfg = _write(tmp_path, _base_config(
        grid={"left": 0.0, "right": 1.0, "n_interior": 49},
        mc={"x0": [0.5], "tau": 0.5, "n_paths": 30000, "dt_sim": 5e-5,
            "policy": "optimal"}))
    out = str(tmp_path / "mc")
    assert main(["mc-check", "--config", cfg, "--out", out]) == 0
    rows = (tmp_path / "mc" / "mc_check.csv").read_text().splitlines()
    assert rows[0] == "x,pde_value,mc_mean,mc_stderr,z_score"
    assert len(rows) == 2
    est = (tmp_path / "mc" / "mc_estimates.csv").read_text().splitlines()
    assert est[0] == "x0,tau,mean,stderr,n_paths,mean_exit_time,seed"
    assert int(est[1].split(",")[4]) == 30000


def test_mc_check_negative_control(tmp_path):
    # deliberately mismatched tau between the solver and the simulation
    cfg = _write(tmp_path, _base_config(
        grid={"left": 0.0, "right": 1.0, "n_interior": 49},
        mc={"x0": [0.5], "tau": 0.0, "pde_tau": 0.5, "n_paths": 20000,
            "dt_sim": 2e-4, "policy": "optimal"}))
    out = str(tmp_path / "mcneg")
    assert main(["mc-check", "--config", cfg, "--out", out]) == 3
    rows = (tmp_path / "mcneg" / "mc_check.csv").read_text().splitlines()
    z = abs(float(rows[1].split(",")[4]))
    assert z > 3.0


def test_seed_flag_overrides(tmp_path):
    cfg = _write(tmp_path, _base_config(hjb={"taus": [0.5]}))
    out = str(tmp_path / "seeded")
    assert main(["solve-hjb", "--config", cfg, "--seed", "7",
                 "--out", out]) == 0
    manifest = json.loads((tmp_path / "seeded" / "solve-hjb-manifest.json")
                          .read_text())
    assert manifest["seed"] == 7


def test_outdir_env_var(tmp_path, monkeypatch):
    cfg = _write(tmp_path, _base_config(hjb={"taus": [0.5]}))
    monkeypatch.setenv("EXITFLOW_OUTDIR", str(tmp_path / "envout"))
    monkeypatch.chdir(tmp_path)
    assert main(["solve-hjb", "--config", cfg]) == 0
    assert (tmp_path / "envout" / "hjb_tau_0p5.csv").exists()
