import json
import os

import pytest

from cfisac import cli
from cfisac.config import ConfigError
from cfisac.experiments import grid_for_antennas, run, validate_spec


def test_empty_config_gives_reference_defaults():
    spec = validate_spec("")
    sc = spec.scenario
    assert sc.m_aps == 8
    assert (sc.k_dl, sc.k_ul, sc.k_t) == (4, 4, 4)
    assert sc.freq_ghz == 4.8
    assert sc.bandwidth_hz == 50e6
    assert sc.noise_density_dbm_hz == -174.0
    assert sc.tau_c == 196
    assert sc.resolved_tau_ul == 8
    assert sc.resolved_tau_dl == 8
    assert sc.p_ul_w == 0.1
    assert sc.p_ap_total_w == 10.0
    assert sc.rcs_m2 == 1.0
    assert sc.rician_delta == 2.0
    assert sc.area_side_m == 300.0
    assert sc.min_ap_spacing_m == 50.0
    assert sc.n_antennas == 32  # desk-scale default array
    assert spec.solver.kappa_dl == 2.0
    assert spec.mc.n_realizations == 10_000


def test_pilot_orthogonality_violation_rejected():
    with pytest.raises(ConfigError, match="pilot orthogonality"):
        validate_spec(json.dumps({"scenario": {"tau_ul": 5}}))


def test_unknown_keys_rejected_by_name():
    with pytest.raises(ConfigError, match="foo"):
        validate_spec(json.dumps({"foo": 1}))
    with pytest.raises(ConfigError, match="bar"):
        validate_spec(json.dumps({"scenario": {"bar": 2}}))
    with pytest.raises(ConfigError, match="baz"):
        validate_spec(json.dumps({"solver": {"baz": 3}}))


def test_kind_mismatch_rejected():
    with pytest.raises(ConfigError, match="does not match"):
        validate_spec(json.dumps({"kind": "cdf"}), kind="convergence")
    with pytest.raises(ConfigError, match="unknown experiment kind"):
        validate_spec(json.dumps({"kind": "nonsense"}))


def test_sweep_must_increase():
    with pytest.raises(ConfigError, match="strictly increasing"):
        validate_spec(json.dumps({"sweep": {"name": "n_antennas", "values": [16, 8]}}))


def test_grid_for_antennas():
    assert grid_for_antennas(8) == (4, 2)
    assert grid_for_antennas(16) == (4, 4)
    assert grid_for_antennas(32) == (8, 4)
    assert grid_for_antennas(100) == (10, 10)
    assert grid_for_antennas(7) == (7, 1)


def _tiny_spec(kind, **extra):
    body = {
        "kind": kind,
        "scenario": {
            "n_x": 4, "n_z": 2, "m_aps": 3, "k_dl": 2, "k_ul": 2, "k_t": 2,
            "seed": 5,
        },
        "solver": {"kappa_dl": 0.3, "kappa_ul": 0.3, "n_starts": 1,
                   "feas_restarts": 1},
        "mc": {"n_realizations": 400, "batch": 128},
    }
    body.update(extra)
    return validate_spec(json.dumps(body))


def test_single_solve_writes_outputs(tmp_path):
    spec = _tiny_spec("single-solve")
    summary = run(spec, out_dir=tmp_path / "out")
    assert summary["status"] == "ok"
    out = tmp_path / "out"
    assert (out / "manifest.json").exists()
    assert (out / "result.json").exists()
    assert (out / "trace.csv").exists()
    result = json.loads((out / "result.json").read_text())
    assert result["status"] in ("optimal", "degraded")
    assert summary["woodbury_residual"] < 1e-10


def test_manifest_replay_byte_identical(tmp_path):
    spec = _tiny_spec("validate-closed-form",
                      sweep={"name": "n_antennas", "values": [8]},
                      n_scenarios=1)
    run(spec, out_dir=tmp_path / "a")
    manifest = (tmp_path / "a" / "manifest.json").read_text()
    spec2 = validate_spec(manifest)
    run(spec2, out_dir=tmp_path / "b")
    for name in os.listdir(tmp_path / "a"):
        if not name.endswith(".csv"):
            continue
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, f"{name} differs between runs"


def test_validate_csv_contains_both_strategies(tmp_path):
    spec = _tiny_spec("validate-closed-form",
                      sweep={"name": "n_antennas", "values": [8]},
                      n_scenarios=1)
    run(spec, out_dir=tmp_path / "v")
    lines = (tmp_path / "v" / "validate_closed_form.csv").read_text().splitlines()
    assert lines[0] == "x,strategy,metric,value,stderr,scenario_seed,status"
    strategies = {line.split(",")[1] for line in lines[1:]}
    assert strategies == {"closed-form", "monte-carlo"}
    audits = [n for n in os.listdir(tmp_path / "v") if n.startswith("audit")]
    assert audits


def test_sweep_qos_runs_and_monotone_smoke(tmp_path):
    spec = _tiny_spec("sweep-qos", sweep={"name": "kappa", "values": [0.1, 0.4]})
    run(spec, out_dir=tmp_path / "q")
    lines = (tmp_path / "q" / "sweep_qos.csv").read_text().splitlines()[1:]
    assert len(lines) == 2
    vals = [float(l.split(",")[3]) for l in lines]
    assert vals[1] <= vals[0] + 0.5


def test_threaded_cdf_matches_serial(tmp_path):
    spec = _tiny_spec("cdf", n_scenarios=2)
    run(spec, out_dir=tmp_path / "s", threads=1)
    run(spec, out_dir=tmp_path / "t", threads=2)
    a = (tmp_path / "s" / "cdf_min_sinr.csv").read_bytes()
    b = (tmp_path / "t" / "cdf_min_sinr.csv").read_bytes()
    assert a == b


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"unknown_key": 1}))
    assert cli.main(["single-solve", "--config", str(bad)]) == 2

    missing = tmp_path / "nope.json"
    assert cli.main(["single-solve", "--config", str(missing)]) == 2

    good = tmp_path / "good.json"
    good.write_text(json.dumps({
        "scenario": {"n_x": 4, "n_z": 2, "m_aps": 3, "k_dl": 2, "k_ul": 2,
                     "k_t": 2, "seed": 5},
        "solver": {"kappa_dl": 0.3, "kappa_ul": 0.3, "n_starts": 1,
                   "feas_restarts": 1},
        "mc": {"n_realizations": 400},
    }))
    assert cli.main(
        ["single-solve", "--config", str(good), "--out", str(tmp_path / "o")]
    ) == 0

    infeasible = tmp_path / "infeasible.json"
    infeasible.write_text(json.dumps({
        "scenario": {"n_x": 4, "n_z": 2, "m_aps": 3, "k_dl": 2, "k_ul": 2,
                     "k_t": 2, "seed": 5},
        "solver": {"kappa_dl": 500.0, "kappa_ul": 500.0, "n_starts": 1,
                   "feas_restarts": 1},
        "mc": {"n_realizations": 400},
    }))
    assert cli.main(
        ["single-solve", "--config", str(infeasible), "--out", str(tmp_path / "i")]
    ) == 3


def test_env_var_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CFISAC_OUT", str(tmp_path / "envout"))
    spec = _tiny_spec("lemmas")
    summary = run(spec)
    assert summary["output_dir"] == str(tmp_path / "envout")
    assert (tmp_path / "envout" / "lemmas.csv").exists()
