import math

import numpy as np
import pytest

from forchheimer import csvio
from forchheimer.constitutive import ForchheimerLaw
from forchheimer.grid import build_grid, norms
from forchheimer.solvers import SolverConfig, run_transient
from forchheimer.verify import (
    cell_average,
    l2_error,
    law_label,
    lemma_law_families,
    make_case_1d_stationary,
    make_case_1d_transient,
    make_dissipation_problem,
    run_convergence,
    run_property_harness,
    write_convergence_csv,
    write_properties_csv,
)

WARD = ForchheimerLaw.ward()


def test_stationary_case_oracles():
    c = make_case_1d_stationary(WARD)
    x = np.array([[0.3, 0.7]])
    assert c.exact_m(x, 0.0)[0, 0] == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-12)
    d = make_case_1d_stationary(ForchheimerLaw.darcy(2.0))
    assert d.exact_m(x, 0.0)[0, 0] == pytest.approx(0.5, abs=1e-15)
    z = make_case_1d_stationary(WARD, drop=0.0)
    assert not z.exact_m(x, 0.0).any() and not z.exact_rho(x, 0.0).any()
    with pytest.raises(ValueError):
        make_case_1d_stationary(WARD, drop=-1.0)


def test_transient_case_oracles():
    c = make_case_1d_transient(WARD)
    s = make_case_1d_stationary(WARD)
    x = np.array([[0.25, 0.5]])
    assert c.exact_rho(x, 0.0) == pytest.approx(s.exact_rho(x, 0.0))
    np.testing.assert_allclose(c.exact_m(x, 0.0), s.exact_m(x, 0.0), atol=1e-15)
    assert c.exact_m(x, 1.0)[0, 0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="H1"):
        make_case_1d_transient(WARD, phi_const=0.0)
    with pytest.raises(ValueError):
        make_case_1d_transient(WARD, time_profile="cubic")


def test_cases_self_verify():
    for law in lemma_law_families():
        assert make_case_1d_stationary(law, 2.0, 3.0).self_check() <= 1e-11
    assert make_case_1d_transient(WARD, 0.5, 2.0, 1.0, "exponential").self_check() <= 1e-11


def test_quadrature_helpers():
    g = build_grid(4, 4)
    c = cell_average(g, lambda p: p[..., 0] ** 2)
    # mean of x^2 over [a, a+h]
    a = np.arange(4) * 0.25
    np.testing.assert_allclose(c.values[:, 0], ((a + 0.25) ** 3 - a**3) / (3 * 0.25))
    # piecewise constant approximation of a linear function
    err = l2_error(cell_average(g, lambda p: p[..., 0]), lambda p: p[..., 0])
    assert err == pytest.approx(0.25 / math.sqrt(12))


def test_darcy_flux_exactly_representable():
    case = make_case_1d_stationary(ForchheimerLaw.darcy(2.0))
    cfg = SolverConfig(eps_schedule=(1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12))
    rows = run_convergence(case, [8, 16, 32], config=cfg)
    assert all(r.error_m <= 1e-10 for r in rows)
    assert rows[0].observed_order is None
    assert all(r.observed_order >= 0.9 for r in rows[1:])


def test_ward_spatial_and_temporal_orders():
    rows = run_convergence(make_case_1d_stationary(WARD), [8, 16, 32])
    assert all(r.observed_order >= 0.9 for r in rows[1:])
    case = make_case_1d_transient(WARD, T=0.5, time_profile="exponential")
    rows = run_convergence(case, dt_list=[0.1, 0.05, 0.025], nx=8, ny=2)
    assert all(r.observed_order >= 0.9 for r in rows[1:])


def test_convergence_argument_checks():
    with pytest.raises(ValueError):
        run_convergence(make_case_1d_stationary(WARD), [8, 16])
    with pytest.raises(ValueError):
        run_convergence(make_case_1d_transient(WARD), dt_list=[0.3, 0.2, 0.1])


def test_convergence_csv_deterministic(tmp_path):
    case = make_case_1d_stationary(WARD)
    for name in ("a.csv", "b.csv"):
        write_convergence_csv(tmp_path / name, run_convergence(case, [4, 8, 16], ny=2))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = csvio.read_rows(tmp_path / "a.csv")
    assert rows[0]["observed_order"] == ""


def test_property_harness_families(tmp_path):
    report = run_property_harness(lemma_law_families(), 10_000, seed=11)
    assert report.ok
    for r in report.laws:
        assert r.worst_continuity_margin >= -1e-14
        assert r.worst_monotonicity_margin >= -1e-14
        assert r.roundtrip_max_error <= 1e-8
    write_properties_csv(tmp_path / "p.csv", report)
    assert len(csvio.read_rows(tmp_path / "p.csv")) == 4


def test_property_harness_flags_bad_constant():
    law = ForchheimerLaw((0.0, 1.0), (1.0, 100.0))
    report = run_property_harness([law], 10_000, seed=0)
    assert not report.ok
    r = report.laws[0]
    assert r.monotonicity_violations > 0 and r.offending
    assert r.continuity_violations == 0


def test_property_harness_requires_samples():
    with pytest.raises(ValueError):
        run_property_harness([WARD], 100)


def test_law_label():
    assert law_label(WARD) == "alpha=(0,1);a=(1,1)"


def test_dissipation_factory_is_seeded():
    a = make_dissipation_problem(WARD, 4, 4, J=4, seed=5)
    b = make_dissipation_problem(WARD, 4, 4, J=4, seed=5)
    np.testing.assert_array_equal(a.rho0.values, b.rho0.values)
    res = run_transient(a)
    assert norms(res.rho[-1]).l2 < norms(res.rho[0]).l2
