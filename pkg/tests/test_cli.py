import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forchheimer import csvio
from forchheimer.cli import main, parse_config, run
from forchheimer.errors import ConfigError

WARD_STATIONARY = """
# Ward strip
command = stationary
law.exponents = 0, 1
law.coefficients = 1, 1
grid.nx = 8
grid.ny = 2
"""


def test_minimal_config_fills_defaults():
    spec = parse_config(WARD_STATIONARY)
    assert spec.command == "stationary"
    assert spec["grid.nx"] == 8 and spec["grid.lx"] == 1.0
    assert spec["solver.eps_schedule"] == (1e-2, 1e-4, 1e-6, 1e-8)
    assert spec.law().s == 3.0


def test_all_errors_reported():
    text = "law.exponents = 0, 1, 0.5\nlaw.coefficients = 1, 1, 1\nporosity.phi_min = 0\nbogus = 1\ngrid.nx = x\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    errors = "\n".join(info.value.errors)
    assert "exponents not strictly increasing" in errors
    assert "H1" in errors
    assert "unknown key 'bogus'" in errors
    assert "grid.nx: malformed" in errors
    assert "command: missing" in errors


def test_transient_step_restriction():
    with pytest.raises(ConfigError, match="phi_min/2"):
        parse_config("command = transient\nporosity.phi_min = 0.1\ntime.J = 10\n")


def test_serialize_roundtrip():
    spec = parse_config(WARD_STATIONARY + "solver.picard_tol = 3.3e-11\nlaw.a_lower = 0.5\n")
    again = parse_config(spec.serialize())
    assert again == spec


@settings(max_examples=30)
@given(
    st.lists(st.floats(0.01, 100), min_size=1, max_size=4),
    st.integers(1, 64),
    st.floats(0.1, 10),
    st.sampled_from(["props", "stationary", "transient", "verify"]),
)
def test_serialize_roundtrip_property(coefs, nx, T, command):
    exps = ", ".join(str(float(i)) for i in range(len(coefs)))
    text = (f"command = {command}\nlaw.exponents = {exps}\n"
            f"law.coefficients = {', '.join(repr(c) for c in coefs)}\n"
            f"grid.nx = {nx}\ntime.T = {T!r}\ntime.J = 1000\n")
    spec = parse_config(text)
    assert parse_config(spec.serialize()) == spec


def run_cli(tmp_path, text, *args):
    tmp_path.mkdir(parents=True, exist_ok=True)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(text)
    out = tmp_path / "out"
    return main([*args, "--config", str(cfg), "--out", str(out)]), out


def test_stationary_run(tmp_path):
    status, out = run_cli(tmp_path, WARD_STATIONARY)
    assert status == 0
    rows = csvio.read_rows(out / "fluxes.csv")
    xs = [float(r["normal_component"]) for r in rows if r["face_type"] == "x"]
    assert np.allclose(xs, 0.6180339887, atol=1e-8)
    assert len(csvio.read_rows(out / "diagnostics.csv")) == 4
    assert (out / "fields.csv").exists()


def test_stationary_non_convergence_exit_code(tmp_path):
    status, out = run_cli(tmp_path, WARD_STATIONARY + "solver.picard_max_iter = 2\n")
    assert status == 2
    assert (out / "diagnostics.csv").exists() and (out / "fluxes.csv").exists()


def test_transient_zero_problem(tmp_path):
    text = "command = transient\nboundary.profile = zero\ngrid.nx = 4\ntime.J = 4\ntime.T = 0.4\n"
    status, out = run_cli(tmp_path, text)
    assert status == 0
    assert all(float(r["value"]) == 0.0 for r in csvio.read_rows(out / "fields.csv"))
    assert len(csvio.read_rows(out / "diagnostics.csv")) == 4


def test_transient_outputs_byte_identical(tmp_path):
    text = ("command = transient\nboundary.profile = zero\ninitial.profile = random\n"
            "grid.nx = 6\ngrid.ny = 6\ntime.J = 5\ntime.T = 0.25\nporosity.profile = smooth\n"
            "porosity.phi_min = 0.5\n")
    a, out_a = run_cli(tmp_path / "a", text, "--seed", "42")
    b, out_b = run_cli(tmp_path / "b", text, "--seed", "42")
    assert a == b == 0
    for name in ("fields.csv", "fluxes.csv", "diagnostics.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_props_and_verify(tmp_path):
    status, out = run_cli(tmp_path, "command = props\n")
    assert status == 0
    rows = csvio.read_rows(out / "properties.csv")
    assert rows[0]["continuity_violations"] == "0" and rows[0]["monotonicity_violations"] == "0"
    status, out = run_cli(tmp_path, "verify.resolutions = 4, 8, 16\ngrid.ny = 2\n", "verify")
    assert status == 0
    assert len(csvio.read_rows(out / "convergence.csv")) == 3


def test_props_reports_violations(tmp_path):
    status, _ = run_cli(tmp_path, "command = props\nlaw.coefficients = 1, 100\n")
    assert status == 2


def test_config_errors_exit_1(tmp_path, capsys):
    status, _ = run_cli(tmp_path, "grid.nx = -3\n", "stationary")
    assert status == 1
    assert "config error" in capsys.readouterr().err
    assert main(["props", "--config", str(tmp_path / "missing.cfg")]) == 1


def test_run_accepts_spec(tmp_path):
    spec = parse_config(WARD_STATIONARY + f"output.dir = {tmp_path / 'o'}\n")
    assert run(spec) == 0
