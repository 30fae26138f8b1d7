import json
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml

from polarion.cli import main
from polarion.config import load_text, model_kwargs, validate_config, validate_data
from polarion.driven import TwoModeModel, default_pump, sweep_point
from polarion.errors import LeakyModeWarning, ParseError

FIXTURES = Path(__file__).parent / "fixtures"


def run(*argv):
    return main([str(a) for a in argv])


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path


def fixture_data(name):
    return yaml.safe_load((FIXTURES / name).read_text())


# ---------------------------------------------------------------------------
# validation


@pytest.mark.parametrize("name", ["lossless_cavity.yaml", "slab_qnm.yaml", "dbr_cavity.yaml", "dimer.yaml"])
def test_fixtures_validate_clean(name):
    assert validate_config(FIXTURES / name) == []


def test_model_fixture_validates():
    assert validate_config(FIXTURES / "dimer_model.yaml", kind="model") == []


def test_negative_rho_diagnostic():
    text = """structure:
  layers:
    - thickness_nm: 100
      eps_b: 4.0
      lorentz:
        omega0_mev: 1500
        coupling_mev: 10
        rho: -1.0
search: {re_min_mev: 100, re_max_mev: 200, im_min_mev: -1, im_max_mev: 1}
"""
    diags = validate_data(load_text(text))
    assert len(diags) == 1
    assert "vacuum unstable" in diags[0].message and diags[0].line == 8


def test_cutoff_diagnostic(tmp_path):
    data = fixture_data("dimer.yaml")
    data["sweep"]["model"]["n_max"] = 1
    diags = validate_config(write_yaml(tmp_path / "c.yaml", data))
    assert any("cutoff below minimum 3" in d.message for d in diags)
    assert run("validate", tmp_path / "c.yaml") == 2


def test_schema_diagnostics_are_line_anchored():
    text = "structure:\n  layers:\n    - {thickness_nm: -5, eps_b: 4}\n  colour: red\nsearch: {re_min_mev: 300, re_max_mev: 200, im_min_mev: -1, im_max_mev: 1}\n"
    diags = validate_data(load_text(text))
    lines = sorted(d.line for d in diags)
    assert lines == [3, 4, 5]
    assert any("unknown key" in d.message for d in diags)


def test_parse_error_location():
    with pytest.raises(ParseError) as exc:
        load_text("structure:\n  layers: [1, 2\n")
    assert exc.value.line is not None
    with pytest.raises(ParseError):
        load_text("a: 1\na: 2\n")


def test_validate_ok_output(capsys):
    assert run("validate", FIXTURES / "lossless_cavity.yaml") == 0
    assert capsys.readouterr().out.strip() == "ok"


# ---------------------------------------------------------------------------
# subcommands


def test_qnm_find(tmp_path):
    out = tmp_path / "modes.json"
    with pytest.warns(LeakyModeWarning):
        assert run("qnm", "find", "--structure", FIXTURES / "slab_qnm.yaml", "--out", out) == 0
    recs = json.loads(out.read_text())["modes"]
    oracle = json.loads((FIXTURES / "slab_rapidities_oracle.json").read_text())["rapidities"]
    assert len(recs) == len(oracle)
    for r, o in zip(recs, oracle):
        assert abs(complex(r["omega_re_mev"], r["omega_im_mev"]) - complex(o["re"], o["im"])) < 1e-9 * abs(complex(o["re"], o["im"]))
        assert (tmp_path / r["profile_file"]).exists()


def test_qnm_empty_window_is_numerical_failure(tmp_path):
    code = run("qnm", "find", "--structure", FIXTURES / "lossless_cavity.yaml", "--re-min", 10, "--re-max", 20, "--im-min", -1, "--im-max", 1, "--out", tmp_path / "m.json")
    assert code == 3


def test_bogoliubov_command(tmp_path):
    out = tmp_path / "b.json"
    assert run("bogoliubov", "--hamiltonian", FIXTURES / "hamiltonian.json", "--out", out) == 0
    rec = json.loads(out.read_text())
    assert all(f > 0 for f in rec["freqs_mev"]) and max(rec["symplectic_errors"]) < 1e-10


def test_thirdq_commands(tmp_path, capsys):
    src = FIXTURES / "two_mode_liouvillian.json"
    assert run("thirdq", "spectrum", "--liouvillian", src) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["stable"] and rec["rate_sum_residual"] < 1e-10
    out = tmp_path / "v.json"
    assert run("thirdq", "verify", "--liouvillian", src, "--nmax", 5, "--out", out) == 0
    ver = json.loads(out.read_text())["verification"]
    assert ver["ok"] and ver["matched"] == ver["checked"]


def test_interactions_command(tmp_path):
    modes = tmp_path / "modes.json"
    assert run("qnm", "find", "--structure", FIXTURES / "dbr_cavity.yaml", "--out", modes) == 0
    out = tmp_path / "u.json"
    assert run("interactions", "--modes", modes, "--g-2d", 1e-3, "--select", "0,1", "--out", out) == 0
    u = np.array(json.loads(out.read_text())["u_mev"])
    assert u.shape == (2, 2) and np.array_equal(u, u.T) and np.all(u > 0)


def test_sweep_command(tmp_path):
    out = tmp_path / "s.csv"
    code = run("sweep", "--model", FIXTURES / "dimer_model.yaml", "--delta-min", -0.05, "--delta-max", 0.05, "--points", 3, "--zero-cross-interaction", "--out", out)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "delta_mev,g11,g22,g12,cs_ratio,n_l,n_r,converged"
    assert len(lines) == 4
    # the flag runs the u12 = 0 comparison model in place of the configured one
    mapping = yaml.safe_load((FIXTURES / "dimer_model.yaml").read_text())["model"]
    m = TwoModeModel(**{**model_kwargs(mapping), "u12": 0.0})
    m = replace(m, pump_amp=default_pump(m))
    row = sweep_point(m, 0.0)
    assert float(lines[2].split(",")[3]) == pytest.approx(row.g12, rel=1e-15)


def test_missing_file_is_config_error(tmp_path):
    assert run("sweep", "--model", tmp_path / "nope.yaml", "--out", tmp_path / "x.csv") == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "polarion", "validate", str(FIXTURES / "lossless_cavity.yaml")], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "ok"


# ---------------------------------------------------------------------------
# pipeline


def pipeline(tmp_path, name, sub="out", data=None):
    cfg = tmp_path / f"{sub}.yaml"
    write_yaml(cfg, data if data is not None else fixture_data(name))
    out = tmp_path / sub
    return run("pipeline", "--config", cfg, "--out-dir", out), out


def test_lossless_pipeline(tmp_path):
    code, out = pipeline(tmp_path, "lossless_cavity.yaml")
    assert code == 0
    modes = json.loads((out / "modes.json").read_text())["modes"]
    assert len(modes) == 3 and all(abs(m["omega_im_mev"]) < 1e-10 for m in modes)
    assert (out / "sweep.csv").read_text().strip() == "delta_mev,g11,g22,g12,cs_ratio,n_l,n_r,converged"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok" and not (out / "FAILED").exists()
    for art in ("modes.json", "rapidities.json", "gkls.json", "umatrix.json", "sweep.csv"):
        assert art in manifest["artifacts"] and (out / art).exists()
    assert not (out / ".polarion.lock").exists()


def test_slab_pipeline_matches_oracle(tmp_path):
    with pytest.warns(LeakyModeWarning):
        code, out = pipeline(tmp_path, "slab_qnm.yaml")
    assert code == 0
    rap = json.loads((out / "rapidities.json").read_text())["rapidities"]
    oracle = json.loads((FIXTURES / "slab_rapidities_oracle.json").read_text())["rapidities"]
    assert len(rap) == 3
    for r, o in zip(rap, oracle):
        assert abs(r["re"] - o["re"]) < 1e-9 * o["re"] and abs(r["im"] - o["im"]) < 1e-9 * abs(o["im"])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["parameters"]["mode0.loss_rate_mev"]["source"] == "computed:modes"


def test_dbr_pipeline_provenance(tmp_path):
    code, out = pipeline(tmp_path, "dbr_cavity.yaml")
    assert code == 0
    params = json.loads((out / "manifest.json").read_text())["parameters"]
    for k in ("j_mev", "gamma_mev", "u11_mev", "u12_mev", "omega_lr_mev"):
        assert params[f"sweep.{k}"]["source"] == "computed:modes+interactions"
    assert params["sweep.pump_mev"]["source"].startswith("default weak drive")
    assert params["interactions.g"]["source"] == "injected"
    assert params["channel.gain.mode0.rate_mev"] == {"value": 0.1, "source": "injected"}
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 6


def test_pipeline_deterministic(tmp_path):
    _, a = pipeline(tmp_path, "dbr_cavity.yaml", sub="a")
    _, b = pipeline(tmp_path, "dbr_cavity.yaml", sub="b")
    for name in ("modes.json", "rapidities.json", "gkls.json", "umatrix.json", "sweep.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    prof = sorted(p.name for p in (a / "modes_profiles").iterdir())
    for name in prof:
        assert (a / "modes_profiles" / name).read_bytes() == (b / "modes_profiles" / name).read_bytes()


def test_failed_stage_leaves_marker(tmp_path):
    data = fixture_data("lossless_cavity.yaml")
    data["search"].update(re_min_mev=10, re_max_mev=20)
    code, out = pipeline(tmp_path, None, data=data)
    assert code == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["failed_stage"] == "modes"
    assert (out / "FAILED").read_text().startswith("modes:")
    # a later good run in the same directory clears the marker
    code, out = pipeline(tmp_path, "lossless_cavity.yaml")
    assert code == 0 and not (out / "FAILED").exists()


def test_later_stage_failure_keeps_earlier_artifacts(tmp_path):
    data = fixture_data("lossless_cavity.yaml")
    data["sweep"] = {"model": {"from_modes": True, "n_max": 4}, "points": 3}
    code, out = pipeline(tmp_path, None, data=data)
    # lossless modes have no damping, so the rapidity stage cannot define a stable spectrum or the sweep needs u11
    assert code in (2, 3)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["failed_stage"] != "modes"
    assert (out / "modes.json").exists()


def test_output_lock(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    (out / ".polarion.lock").write_text("123")
    code, _ = pipeline(tmp_path, "lossless_cavity.yaml")
    assert code == 2
    assert (out / ".polarion.lock").read_text() == "123"


def test_threads_env_caps_workers(monkeypatch):
    from polarion.driven import worker_count

    monkeypatch.setenv("POLARION_THREADS", "1")
    assert worker_count(8) == 1
    monkeypatch.delenv("POLARION_THREADS")
    assert worker_count(1) == 1
