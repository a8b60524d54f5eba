import json
import math

import numpy as np
import pytest

from iontrap_nm import cli
from iontrap_nm.dynamics import QubitTrajectory

SMALL = ["--set", "model.modes.0.fock_dim=4", "--set", "model.modes.1.fock_dim=4"]


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def test_presets_load():
    for name in cli.PRESETS:
        rc = cli.build_run_config(cli.assemble_config(preset=name))
        assert rc.model.modes


def test_evolve_dephasing_closed_form(tmp_path):
    code, out = run(["evolve", *SMALL, "--set", "model.rabi_mhz=0", "--set", "grid.t_end=20",
                     "--set", "grid.n_points=41"], tmp_path)
    assert code == 0
    tr = QubitTrajectory.from_csv(out / "trajectory_1.csv")
    assert np.max(np.abs(tr.bloch[:, 0] - np.exp(-2 * 0.0049 * tr.times))) < 1e-6
    assert (out / "config.json").exists()


def test_missing_field_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"model": {"rabi_mhz": 1.0, "modes": [{"lamb_dicke": 0.1}]}}))
    code, _ = run(["evolve", "--config", str(cfg)], tmp_path)
    assert code == 2
    assert "frequency_mhz" in capsys.readouterr().err


def test_bad_json_reports_line(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "model": {\n    "rabi_mhz": ,\n  }\n}\n')
    code, _ = run(["nm", "--config", str(cfg)], tmp_path)
    assert code == 2
    assert "line 3" in capsys.readouterr().err


@pytest.mark.parametrize("override,field", [
    ("model.rabi_mhz=-1", "model"),
    ("grid.n_points=1", "grid"),
    ("frame=rotating", "frame"),
    ("colour=1", "colour"),
    ("model.modes.5.fock_dim=3", "model.modes.5"),
])
def test_config_errors(tmp_path, capsys, override, field):
    code, _ = run(["evolve", "--set", override], tmp_path)
    assert code == 2
    assert field in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    code, _ = run(["evolve", *SMALL, "--set", "step_bound=500", "--set", "grid.n_points=3"], tmp_path)
    assert code == 3
    assert "rabi_mhz" in capsys.readouterr().err


def test_evolve_deterministic_and_echo_closure(tmp_path):
    args = ["evolve", *SMALL, "--set", "grid.t_end=5", "--set", "grid.n_points=11", "--shots", "600",
            "--seed", "7"]
    assert run(args, tmp_path, "a")[0] == 0
    assert run(args, tmp_path, "b")[0] == 0
    a, b = tmp_path / "a", tmp_path / "b"
    for f in ("trajectory_1.csv", "trajectory_2.csv", "config.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    assert run(["evolve", "--config", str(a / "config.json")], tmp_path, "c")[0] == 0
    assert (a / "trajectory_1.csv").read_bytes() == (tmp_path / "c" / "trajectory_1.csv").read_bytes()
    head = (a / "trajectory_1.csv").read_text().splitlines()[0]
    assert head == "t_us,sx,sy,sz,sx_err,sy_err,sz_err"


def test_nm_with_shots(tmp_path):
    code, out = run(["nm", *SMALL, "--set", "grid.t_end=10", "--set", "grid.n_points=21",
                     "--shots", "600", "--seed", "7"], tmp_path)
    assert code == 0
    summary = json.loads((out / "nm.json").read_text())
    assert summary["nm"] >= 0 and summary["nm_err"] > 0
    assert summary["params"]["rabi_mhz"] == 2.245 and summary["grid"]["n_points"] == 21
    lines = (out / "nm.csv").read_text().splitlines()
    assert lines[0] == "t_us,D,D_err,sigma,sigma_err" and len(lines) == 22


def test_maximize_degenerate_grid_matches_pair(tmp_path):
    common = ["nm", *SMALL, "--set", "grid.t_end=10", "--set", "grid.n_points=21"]
    assert run(common, tmp_path, "plain")[0] == 0
    assert run([*common, "--set", 'maximize={"theta_steps": 1, "phi_steps": 1}'], tmp_path, "max")[0] == 0
    a = json.loads((tmp_path / "plain" / "nm.json").read_text())
    b = json.loads((tmp_path / "max" / "nm.json").read_text())
    assert b["nm"] == pytest.approx(a["nm"], rel=1e-12)
    assert b["theta"] == pytest.approx(math.pi / 2) and b["phi"] == 0.0


def test_sweep_circle_toy_grid(tmp_path):
    axes = json.dumps([{"name": "detuning_mhz", "values": [0, 1, 2]},
                       {"name": "rabi_mhz", "values": [0, 1, 2]}])
    code, out = run(["sweep", "--preset", "fig5", "--set", f"sweep.axes={axes}", *SMALL,
                     "--set", "grid.t_end=2", "--set", "grid.n_points=5", "--stamp", "x"], tmp_path)
    assert code == 0
    rows = (out / "sweep_circle_x.csv").read_text().splitlines()
    assert len(rows) == 10


def test_sweep_omega_zero_first(tmp_path):
    code, out = run(["sweep", "--preset", "fig4", "--set", 'sweep.axes=[{"name": "rabi_mhz", "values": [0, 2]}]',
                     *SMALL, "--set", "grid.t_end=4", "--set", "grid.n_points=9", "--stamp", "x"], tmp_path)
    assert code == 0
    rows = (out / "sweep_omega_x.csv").read_text().splitlines()
    assert rows[1].split(",")[1] == "0"


def test_sweep_without_section(tmp_path):
    code, _ = run(["sweep", *SMALL], tmp_path)
    assert code == 2


def test_workers_env(monkeypatch):
    from iontrap_nm.sweep import default_workers
    monkeypatch.setenv("IONTRAP_NM_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.delenv("IONTRAP_NM_WORKERS")
    assert default_workers() == 1


def test_override_parsing():
    cfg = {"a": {"b": [1, {"c": 2}]}}
    cli.apply_override(cfg, "a.b.1.c=3.5")
    cli.apply_override(cfg, "a.d=hello")
    cli.apply_override(cfg, 'a.e={"x": [1, 2]}')
    assert cfg == {"a": {"b": [1, {"c": 3.5}], "d": "hello", "e": {"x": [1, 2]}}}
    with pytest.raises(cli.ConfigError):
        cli.apply_override(cfg, "novalue")
