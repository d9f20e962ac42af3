import filecmp
import json
import os

import numpy as np
import pytest

from h2flow.cli import main, resolve_config
from h2flow.config import ConfigError, parse_config
from h2flow.diagnostics import EnergyReport
from h2flow.harness import FIELD_COLUMNS, cmd_sweep, execute, read_energy_csv, read_steps_csv

STEADY = """\
[grid]
cells = 8
[fluid]
mu_l = 1.0
mu_g = 1.0
M_h = 1.0
R = 1.0
T = 0.019043991620643686
rho_l_w = 1.0
rho_min = 0.001
rho_max = 10.0
[closures]
P_e = 1.0
d_star = 0.01
[time]
T = 0.3
steps = 3
[output]
cadence = 2
"""


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _short(cfg, T=0.2, steps=10):
    return cfg.replace(time__T=T, time__steps=steps)


def test_steady_run_outputs(tmp_path):
    out = tmp_path / "run"
    cfg = parse_config(_write(tmp_path, STEADY))
    _, traj, summary = execute(cfg, out=str(out))
    files = set(os.listdir(out))
    for name in ("energy.csv", "steps.csv", "assumptions.txt", "assumptions.kv", "summary.json",
                 "meta.json", "checkpoint.npz", "config.ini", "fields_00000.csv",
                 "fields_00002.csv", "fields_00003.csv"):
        assert name in files, name
    reports = read_energy_csv(out / "energy.csv")
    assert len(reports) == 3
    for r in reports:
        assert r.diss_l == r.diss_g == r.diss_diff == r.diss_eta == 0.0
    steps = read_steps_csv(out / "steps.csv")
    assert [r[3] for r in steps] == [0, 0, 0]
    assert summary["water_drift_max"] == 0.0


def test_every_output_has_version_and_hash_header(tmp_path):
    out = tmp_path / "run"
    cfg = parse_config(_write(tmp_path, STEADY))
    execute(cfg, out=str(out))
    h = cfg.hash()
    for name in os.listdir(out):
        if name.endswith(".csv") or name in ("assumptions.txt", "assumptions.kv"):
            first = (out / name).read_text().splitlines()[0]
            assert first.startswith("# h2flow ") and f"config={h}" in first, name
    lines = (out / "fields_00003.csv").read_text().splitlines()
    assert lines[1].split(",") == ["x"] + list(FIELD_COLUMNS)
    assert lines[0].endswith("step=3")
    assert lines[1 + 1].count(",") == len(FIELD_COLUMNS)
    energy = (out / "energy.csv").read_text().splitlines()[1].split(",")
    assert energy == EnergyReport.columns()
    meta = json.loads((out / "meta.json").read_text())
    assert meta["config_hash"] == h and "energy.csv" in meta["files"]


def test_identical_configs_identical_outputs(tmp_path, injection_cfg):
    cfg = _short(injection_cfg)
    execute(cfg, out=str(tmp_path / "a"))
    execute(cfg, out=str(tmp_path / "b"))
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only


def test_interrupted_run_restarts_byte_identical(tmp_path, injection_cfg):
    cfg = _short(injection_cfg)
    full, part = tmp_path / "full", tmp_path / "part"
    execute(cfg, out=str(full))
    execute(cfg, out=str(part), stop_time=0.1)
    assert not (part / "fields_00010.csv").exists()
    execute(cfg, out=str(part), resume=True)
    names = sorted(os.listdir(full))
    assert names == sorted(os.listdir(part))
    for name in names:
        assert (full / name).read_bytes() == (part / name).read_bytes(), name


def test_resume_rejects_other_config(tmp_path, injection_cfg):
    cfg = _short(injection_cfg)
    execute(cfg, out=str(tmp_path), stop_time=0.1)
    with pytest.raises(ConfigError):
        execute(cfg.replace(scheme__eta=1e-2), out=str(tmp_path), resume=True)


def test_sweep_identical_ladder_has_zero_differences(injection_cfg):
    rep = cmd_sweep(_short(injection_cfg, T=0.1, steps=5), "eta", [1e-3, 1e-3, 1e-3])
    assert all(d == 0.0 for ds in rep["differences"].values() for d in ds)
    assert rep["cauchy"] and rep["bounded"]
    assert all(v["trend"] == "flat" for v in rep["boundedness"].values())


def test_sweep_rejects_short_ladder(injection_cfg):
    with pytest.raises(ConfigError):
        cmd_sweep(injection_cfg, "eta", [1e-2, 1e-3])
    with pytest.raises(ConfigError):
        cmd_sweep(injection_cfg, "h", [10, 15, 20])


def test_sweep_parallel_matches_serial(injection_cfg, tmp_path):
    cfg = _short(injection_cfg, T=0.1, steps=5)
    a = cmd_sweep(cfg, "eps", [1e-3, 1e-4, 1e-5], workers=1)
    b = cmd_sweep(cfg, "eps", [1e-3, 1e-4, 1e-5], workers=2, out=str(tmp_path))
    assert a["differences"] == b["differences"]
    assert (tmp_path / "sweep.json").exists()
    assert (tmp_path / "eps_02" / "energy.csv").exists()


# command line -----------------------------------------------------------

def test_cli_run_ok(tmp_path, capsys):
    code = main(["run", "--config", _write(tmp_path, STEADY), "--out", str(tmp_path / "o")])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["steps"] == 3


def test_cli_config_errors_exit_2(tmp_path, capsys):
    bad = _write(tmp_path, STEADY + "[rock]\nporosity = 1.5\n", "bad.ini")
    assert main(["run", "--config", bad, "--out", str(tmp_path / "o")]) == 2
    assert "H1 violated" in capsys.readouterr().err
    unk = _write(tmp_path, STEADY + "[scheme]\nsteps = 3\n", "unk.ini")
    assert main(["audit", "--config", unk]) == 2
    assert "unk.ini:" in capsys.readouterr().err
    assert main(["audit", "--config", str(tmp_path / "missing.ini")]) == 2


def test_cli_waive_flag(tmp_path):
    bad = _write(tmp_path, STEADY + "[rock]\nporosity = 1.5\n", "bad.ini")
    assert main(["audit", "--config", bad, "--waive-assumptions", "H1"]) == 0


def test_cli_solver_failure_exit_3(tmp_path, capsys):
    text = open(resolve_config("injection_1d")).read().replace("max_iter = 30", "max_iter = 0")
    cfg = _write(tmp_path, text)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "underflow" in capsys.readouterr().err


def test_cli_failed_audit_exit_4(tmp_path, capsys):
    cfg = _write(tmp_path, STEADY + "[audit]\nm0_floor = 10\n")
    assert main(["audit", "--config", cfg]) == 4
    assert "H3: FAIL" in capsys.readouterr().out


def test_cli_tables(tmp_path):
    assert main(["tables", "--config", "injection_1d", "--out", str(tmp_path)]) == 0
    data = np.loadtxt(tmp_path / "tables.csv", delimiter=",", skiprows=2)
    assert data.shape[1] == 5 and data[0, 0] == 0.0 and data[-1, 0] == 1.0


def test_cli_sweep_identical_ladder(tmp_path, capsys):
    text = open(resolve_config("injection_1d")).read()
    text = text.replace("T = 1.0\nsteps = 50", "T = 0.1\nsteps = 5")
    cfg = _write(tmp_path, text)
    code = main(["sweep", "--config", cfg, "--out", str(tmp_path / "s"), "--parameter", "eta",
                 "--ladder", "1e-3,1e-3,1e-3"])
    assert code == 0
    rep = json.loads((tmp_path / "s" / "sweep.json").read_text())
    assert rep["differences"]["p_g"] == [0.0, 0.0]
