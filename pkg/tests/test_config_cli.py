import os

import numpy as np
import pytest

from thermoflow.cli import main
from thermoflow.config import ConfigError, echo_config, load_config, parse_config


MINIMAL = """
[grid]
nx = 16
ny = 16

[stepping]
dt = 1e-3
end_time = 0.005
"""


def test_minimal_config_defaults_applied():
    cfg = parse_config(MINIMAL)
    assert cfg.get("bc", "theta") == "dirichlet"
    assert cfg.get("coeffs", "mu") == "const:1.0"
    assert cfg.getfloat("coeffs", "sigma") == 1.0
    assert cfg.get("init", "theta") == "zero"


def test_config_roundtrip_identity():
    cfg = parse_config(MINIMAL)
    echoed = echo_config(cfg)
    cfg2 = parse_config(echoed)
    assert cfg.data == cfg2.data
    assert echo_config(cfg2) == echoed


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(MINIMAL + "\n[physics]\ngravity = 9.8\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[grid]\nnx = 16\nny = 16\nnz = 16\n")


def test_negative_sigma_rejected():
    with pytest.raises(ConfigError, match="sigma"):
        parse_config(MINIMAL + "\n[coeffs]\nsigma = -1.0\n")


def test_bad_boundary_tag_rejected():
    with pytest.raises(ConfigError, match="dirichlet or neumann"):
        parse_config(MINIMAL + "\n[bc]\ntheta = periodic\n")


def test_neumann_with_decay_assertion_rejected_at_parse():
    text = MINIMAL + "\n[bc]\ntheta = neumann\n\n[experiment]\nassert_decay = true\n"
    with pytest.raises(ConfigError, match="Dirichlet"):
        parse_config(text)
    # without the assertion the Neumann tag itself is fine
    parse_config(MINIMAL + "\n[bc]\ntheta = neumann\n")


def test_odd_grid_rejected():
    with pytest.raises(ConfigError, match="even"):
        parse_config("[grid]\nnx = 17\nny = 16\n")


def test_bad_profile_rejected():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "\n[init]\ntheta = vortex:1.0\n")
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "\n[init]\ntheta = modemix\n")


def test_build_state_profiles():
    text = MINIMAL + """
[init]
u = stream:0.1
v = modemix:0.2
theta = eigenmode:0.3
"""
    cfg = parse_config(text)
    s = cfg.build_state()
    assert np.max(np.abs(s.theta.values)) == pytest.approx(0.3, rel=0.05)
    assert np.any(s.u.x.values != 0.0)
    assert np.any(s.v.y.values != 0.0)


def test_random_profile_is_seeded():
    text = MINIMAL + "\n[init]\ntheta = random:0.5,99\n"
    a = parse_config(text).build_state().theta.values
    b = parse_config(text).build_state().theta.values
    assert np.array_equal(a, b)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_run_happy_path(tmp_path):
    cfgtext = MINIMAL + f"\n[output]\noutdir = {tmp_path}/out\ncheckpoint = final.ckpt\n"
    path = _write(tmp_path, "ok.cfg", cfgtext)
    assert main(["run", "--config", path]) == 0
    assert (tmp_path / "out" / "ledger.csv").exists()
    assert (tmp_path / "out" / "effective.cfg").exists()
    assert (tmp_path / "out" / "final.ckpt").exists()


def test_cli_run_missing_config_flag():
    assert main(["run"]) == 2


def test_cli_unknown_subcommand():
    assert main(["frobnicate"]) == 2


def test_cli_config_error_exit_2(tmp_path):
    path = _write(tmp_path, "bad.cfg", "[coeffs]\nsigma = -1\n")
    assert main(["run", "--config", path]) == 2


def test_cli_parse_gate_neumann_decay(tmp_path):
    text = MINIMAL + "\n[bc]\ntheta = neumann\n\n[experiment]\nassert_decay = true\n"
    path = _write(tmp_path, "gate.cfg", text)
    assert main(["decay", "--config", path]) == 2


def test_cli_out_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("THERMOFLOW_OUT_ROOT", str(tmp_path))
    cfgtext = MINIMAL + "\n[output]\noutdir = nested/out\n"
    path = _write(tmp_path, "env.cfg", cfgtext)
    assert main(["run", "--config", path]) == 0
    assert (tmp_path / "nested" / "out" / "ledger.csv").exists()


def test_cli_restart_matches_uninterrupted(tmp_path):
    base = MINIMAL + f"\n[output]\noutdir = {tmp_path}/a\ncheckpoint = half.ckpt\n"
    half = base.replace("end_time = 0.005", "end_time = 0.002")
    p_half = _write(tmp_path, "half.cfg", half)
    assert main(["run", "--config", p_half]) == 0

    rest = MINIMAL.replace("end_time = 0.005", "end_time = 0.003") \
        + f"\n[output]\noutdir = {tmp_path}/b\ncheckpoint = final.ckpt\n"
    p_rest = _write(tmp_path, "rest.cfg", rest)
    assert main(["run", "--config", p_rest,
                 "--restart", str(tmp_path / "a" / "half.ckpt")]) == 0

    full = MINIMAL + f"\n[output]\noutdir = {tmp_path}/c\ncheckpoint = final.ckpt\n"
    p_full = _write(tmp_path, "full.cfg", full)
    assert main(["run", "--config", p_full]) == 0

    from thermoflow.stepper import load_checkpoint
    s_ab, _ = load_checkpoint(tmp_path / "b" / "final.ckpt")
    s_c, _ = load_checkpoint(tmp_path / "c" / "final.ckpt")
    assert s_ab.t == pytest.approx(s_c.t, abs=1e-12)
    assert np.array_equal(s_ab.theta.values, s_c.theta.values)


def test_cli_decay_subcommand(tmp_path, capsys):
    text = """
[grid]
nx = 16
ny = 16

[init]
theta = modemix:0.05
u = stream:0.05
v = modemix:0.05

[stepping]
dt = 1e-3
end_time = 0.05

[experiment]
assert_decay = true
""" + f"\n[output]\noutdir = {tmp_path}/out\n"
    path = _write(tmp_path, "decay.cfg", text)
    assert main(["decay", "--config", path]) == 0
    out = capsys.readouterr().out
    assert '"passed": true' in out


def test_cli_stokes_subcommand(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("THERMOFLOW_OUT_ROOT", str(tmp_path))
    assert main(["stokes", "--n", "16", "--out", "stokes.csv"]) == 0
    assert (tmp_path / "stokes.csv").exists()
    text = (tmp_path / "stokes.csv").read_text()
    assert "energy_gap" in text and "div_sweep_0" in text


def test_cli_degiorgi_subcommand(tmp_path):
    text = """
[grid]
nx = 16
ny = 16

[init]
theta = modemix:0.1
v = modemix:0.1

[stepping]
dt = 1e-3
end_time = 0.02
snapshot_interval = 2
""" + f"\n[output]\noutdir = {tmp_path}/out\n"
    path = _write(tmp_path, "dg.cfg", text)
    assert main(["degiorgi", "--config", path]) == 0
