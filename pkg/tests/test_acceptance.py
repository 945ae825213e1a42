"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from forchheimer.constitutive import (
    ForchheimerLaw,
    flux_from_gradient,
    gradient_from_flux,
    solve_s,
)
from forchheimer.grid import FaceField, norms, porosity_field
from forchheimer.solvers import (
    SolverConfig,
    StationaryProblem,
    TransientProblem,
    run_transient,
    solve_stationary,
)
from forchheimer.verify import (
    lemma_law_families,
    make_case_1d_stationary,
    make_case_1d_transient,
    make_dirichlet_2d_problem,
    make_dissipation_problem,
    make_transient_2d_problem,
    run_convergence,
    run_property_harness,
)

WARD = ForchheimerLaw.ward(1.0, 1.0)
MIXED = ForchheimerLaw((0.0, 0.5, 1.0, 2.0), (1.0, 1.0, 1.0, 1.0))
PICARD_TOL = SolverConfig().picard_tol


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def manufactured_run():
    case = make_case_1d_transient(WARD, 1.0, 1.0, 1.0, "linear")
    grid = case.grid(64, 4)
    problem = TransientProblem(
        WARD, grid, porosity_field(grid, 1.0, 1.0), lambda t: case.source_field(grid, t),
        lambda t: case.rho_b(grid, t), case.rho_field(grid, 0.0), 1.0, 100, lipschitz_L=0.0,
    )
    return grid, run_transient(problem)


def test_criterion_01_roundtrip(verdict):
    rng = np.random.default_rng(2024)
    worst, start = 0.0, time.perf_counter()
    for law in (WARD, MIXED):
        g = rng.normal(size=(10_000, 2))
        g *= rng.uniform(0.0, 1e3, (10_000, 1)) / np.linalg.norm(g, axis=1, keepdims=True)
        back = gradient_from_flux(law, None, 0.0, flux_from_gradient(law, None, 0.0, g))
        err = np.linalg.norm(back - g, axis=1) / (1.0 + np.linalg.norm(g, axis=1))
        worst = max(worst, float(err.max()))
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-8 and elapsed <= 1.0,
            f"max relative error {worst:.2e}, {elapsed:.3f} s")


def test_criterion_02_root_oracles(verdict):
    ward = abs(solve_s(WARD, None, 0.0, 2.0) - 1.0)
    darcy = abs(solve_s(ForchheimerLaw.darcy(2.0), None, 0.0, 6.0) - 3.0)
    verdict(2, ward <= 1e-12 and darcy <= 1e-12, f"Ward {ward:.1e}, Darcy {darcy:.1e}")


def test_criterion_03_lemma_suite(verdict):
    report = run_property_harness(lemma_law_families(), 100_000, seed=3)
    worst = min(min(r.worst_continuity_margin, r.worst_monotonicity_margin) for r in report.laws)
    n_bad = sum(r.continuity_violations + r.monotonicity_violations for r in report.laws)
    verdict(3, n_bad == 0 and worst >= -1e-14,
            f"{n_bad} violations over {sum(r.n_samples for r in report.laws)} pairs, "
            f"worst relative margin {worst:.2e}")


def test_criterion_04_stationary_oracle(verdict):
    start = time.perf_counter()
    rows = run_convergence(make_case_1d_stationary(WARD), [8, 16, 32, 64], ny=4)
    elapsed = time.perf_counter() - start
    flux = max(r.error_m for r in rows)
    order = min(r.observed_order for r in rows[1:])
    verdict(4, flux <= 1e-8 and order >= 0.9 and elapsed <= 10.0,
            f"flux error {flux:.2e}, min order {order:.3f}, {elapsed:.2f} s")


def test_criterion_05_eps_continuation(verdict):
    problem = make_dirichlet_2d_problem(WARD, 16, 16)
    _, rho, report = solve_stationary(problem)
    diffs = report.rho_differences
    decreasing = all(b < a for a, b in zip(diffs, diffs[1:]))
    rel = diffs[-1] / norms(rho).l2
    verdict(5, decreasing and rel <= 1e-4,
            f"differences {', '.join(f'{d:.2e}' for d in diffs)}, last relative {rel:.2e}")


def test_criterion_06_uniqueness(verdict):
    case = make_case_1d_stationary(WARD)
    grid = case.grid(16, 4)
    problem = StationaryProblem(WARD, grid, case.source_field(grid), case.rho_b(grid))
    m0, _, _ = solve_stationary(problem)
    rng = np.random.default_rng(6)
    start = FaceField.from_vector(grid, rng.uniform(-2.0, 2.0, grid.n_faces))
    m1, _, _ = solve_stationary(problem, m_init=start)
    diff = norms(m1 - m0).l2
    verdict(6, diff <= 1e-8, f"face-norm difference {diff:.2e}")


def test_criterion_07_energy_identity(verdict, manufactured_run):
    _, result = manufactured_run
    ratios = [d.energy_identity_residual / (10.0 * PICARD_TOL * d.energy_scale)
              for d in result.diagnostics]
    verdict(7, len(ratios) == 100 and max(ratios) <= 1.0,
            f"worst r_j / bound = {max(ratios):.2e} over {len(ratios)} steps")


def test_criterion_08_manufactured_accuracy(verdict, manufactured_run):
    grid, result = manufactured_run
    xc = grid.cell_centers()[..., 0]
    rho_err = max(float(np.max(np.abs(r.values - (1.0 + t) * (1.0 - xc))))
                  for t, r in zip(result.times, result.rho))
    flux_err = max(float(np.max(np.abs(m.x - solve_s(WARD, None, d.t, 1.0 + d.t))))
                   for m, d in zip(result.m, result.diagnostics))
    bound = 2.0 * grid.hx + 1e2 * PICARD_TOL
    verdict(8, rho_err <= bound and flux_err <= 1e-6,
            f"density error {rho_err:.2e} (bound {bound:.2e}), flux error {flux_err:.2e}")


def test_criterion_09_dt_uniformity(verdict):
    sums, maxima = [], []
    for J in (25, 50, 100):
        result = run_transient(make_transient_2d_problem(WARD, 16, 16, 1.0, J))
        sums.append(result.cum_dt_drho2)
        maxima.append(result.max_rho_norm)
    spread = (max(sums) - min(sums)) / min(sums)
    spread_max = (max(maxima) - min(maxima)) / min(maxima)
    verdict(9, spread <= 0.2 and spread_max <= 0.05,
            f"sum spread {spread:.1%}, max-norm spread {spread_max:.1%}")


def test_criterion_10_dissipation(verdict):
    result = run_transient(make_dissipation_problem(WARD, 16, 16, 1.0, 200, seed=10))
    n = np.array([norms(r).l2 for r in result.rho])
    increases = int(np.sum(np.diff(n) > 0))
    verdict(10, increases == 0 and len(n) == 201,
            f"{increases} increases over {len(n) - 1} steps, final/initial {n[-1] / n[0]:.2e}")
