"""Manufactured solutions, the constitutive property harness and convergence studies.

Manufactured cases vary along x only, so the exact flux is spatially uniform
and automatically compatible with the curl-free gradient ``F(|m|) m``.  They
still run through the full 2D discretization on a strip ``[0, L] x [0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import csvio
from .constitutive import (
    ROOT_TOL,
    ForchheimerLaw,
    check_continuity_bound,
    check_monotonicity_bound,
    eval_K,
    flux_from_gradient,
    gradient_from_flux,
    lemma_constants,
    solve_s,
)
from .grid import BoundaryTrace, CellField, FaceField, build_grid, porosity_field
from .solvers import (
    SolverConfig,
    StationaryProblem,
    TransientProblem,
    run_transient,
    solve_stationary,
)

Field = Callable[[np.ndarray, float], np.ndarray]

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact pair ``(rho, m)`` with matching source and boundary data.

    Positions ``x`` have shape ``(..., 2)``.  ``phi`` is ``None`` for
    stationary cases.  Construction checks the momentum and mass equations at
    random samples.
    """

    name: str
    law: ForchheimerLaw
    exact_rho: Field
    exact_m: Field
    source: Field
    grad_rho: Field
    drho_dt: Field
    div_m: Field
    length: float = 1.0
    T: float = 0.0
    phi: float | None = None

    def __post_init__(self):
        self.self_check()

    @property
    def transient(self):
        return self.phi is not None

    def boundary(self, x, t):
        return self.exact_rho(x, t)

    def residuals(self, x, t):
        """Pointwise ``F(|m|) m + grad rho`` (scaled) and mass balance residuals."""
        m = self.exact_m(x, t)
        g = self.grad_rho(x, t)
        mom = np.linalg.norm(gradient_from_flux(self.law, x, t, m) - g, axis=-1)
        mom = mom / np.maximum(1.0, np.linalg.norm(g, axis=-1))
        phi = self.phi if self.transient else 0.0
        mass = np.abs(phi * self.drho_dt(x, t) + self.div_m(x, t) - self.source(x, t))
        return mom, mass

    def self_check(self, n=1000, seed=0, root_tol=ROOT_TOL):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.0, 1.0, (n, 2)) * [self.length, 1.0]
        times = rng.uniform(0.0, self.T, n) if self.transient else np.zeros(n)
        worst = 0.0
        for xi, ti in zip(x, times):
            mom, mass = self.residuals(xi[None, :], float(ti))
            worst = max(worst, float(mom.max()), float(mass.max()))
        if worst > 10.0 * root_tol:
            raise ValueError(f"manufactured case {self.name!r} residual {worst:.3e} too large")
        return worst

    def grid(self, nx, ny=4):
        return build_grid(nx, ny, self.length, 1.0)

    def rho_b(self, grid, t=0.0):
        return BoundaryTrace.from_function(grid, lambda x, y: self.boundary(np.stack([x, y], -1), t))

    def source_field(self, grid, t=0.0):
        return cell_average(grid, lambda x: self.source(x, t))

    def rho_field(self, grid, t=0.0):
        return cell_average(grid, lambda x: self.exact_rho(x, t))

    def m_field(self, grid, t=0.0):
        return FaceField.from_function(grid, lambda x, y: np.moveaxis(
            self.exact_m(np.stack([x, y], -1), t), -1, 0))


def cell_average(grid, fn):
    """Cell means of ``fn(x)`` by 3x3 Gauss quadrature."""
    return CellField(grid, _gauss(grid, fn, lambda v: v))


def l2_error(rho, fn):
    """``||rho_h - rho||`` with ``rho_h`` piecewise constant, by Gauss quadrature."""
    grid = rho.grid
    sq = _gauss(grid, fn, lambda v: (rho.values[..., None, None] - v) ** 2)
    return float(np.sqrt(np.sum(sq) * grid.cell_volume))


def _gauss(grid, fn, post):
    c = grid.cell_centers()
    px = c[..., 0, None, None] + 0.5 * grid.hx * _GAUSS_X[:, None]
    py = c[..., 1, None, None] + 0.5 * grid.hy * _GAUSS_X[None, :]
    px, py = np.broadcast_arrays(px, py)
    vals = post(np.asarray(fn(np.stack([px, py], -1)), dtype=float) * np.ones(px.shape))
    w = 0.25 * _GAUSS_W[:, None] * _GAUSS_W[None, :]
    return np.sum(vals * w, axis=(-2, -1))


def _uniform_x(value, x):
    out = np.zeros(np.shape(x))
    out[..., 0] = value
    return out


def make_case_1d_stationary(law, drop=1.0, length=1.0):
    """Strip with ``rho`` falling linearly by ``drop`` over ``length``; ``f = 0``."""
    if drop < 0 or not length > 0:
        raise ValueError("need drop >= 0 and length > 0")
    slope = drop / length
    speed = float(solve_s(law, None, 0.0, slope)) if law.is_constant else None

    def speed_at(x, t):
        if speed is not None:
            return speed
        return solve_s(law, x, t, slope * np.ones(np.shape(x)[:-1]))

    def zero(x, t):
        return np.zeros(np.shape(x)[:-1])

    return ManufacturedCase(
        name=f"strip_stationary_drop{drop:g}",
        law=law,
        exact_rho=lambda x, t: drop * (1.0 - x[..., 0] / length),
        exact_m=lambda x, t: _uniform_x(speed_at(x, t), x),
        source=zero,
        grad_rho=lambda x, t: _uniform_x(-slope, x),
        drho_dt=zero,
        div_m=zero,
        length=length,
    )


def make_case_1d_transient(law, phi_const=1.0, length=1.0, T=1.0, time_profile="linear"):
    """``rho = g(t) (1 - x/L)`` with ``g = 1 + t`` or ``exp(t)``; ``m = s(g/L) e_x``.

    The linear profile is reproduced exactly by implicit Euler, so temporal
    convergence studies use the exponential one.
    """
    if not phi_const > 0:
        raise ValueError("porosity must be bounded below by a positive constant (H1)")
    if not (length > 0 and T > 0):
        raise ValueError("length and T must be positive")
    if time_profile == "linear":
        g, dg = (lambda t: 1.0 + t), (lambda t: 1.0)
    elif time_profile == "exponential":
        g, dg = math.exp, math.exp
    else:
        raise ValueError(f"unknown time profile {time_profile!r}")
    if not law.is_constant:
        raise ValueError("transient manufactured cases need a constant-coefficient law")

    def shape(x):
        return 1.0 - x[..., 0] / length

    def zero(x, t):
        return np.zeros(np.shape(x)[:-1])

    return ManufacturedCase(
        name=f"strip_transient_{time_profile}",
        law=law,
        exact_rho=lambda x, t: g(t) * shape(x),
        exact_m=lambda x, t: _uniform_x(float(solve_s(law, None, t, g(t) / length)), x),
        source=lambda x, t: phi_const * dg(t) * shape(x),
        grad_rho=lambda x, t: _uniform_x(-g(t) / length, x),
        drho_dt=lambda x, t: dg(t) * shape(x),
        div_m=zero,
        length=length,
        T=T,
        phi=float(phi_const),
    )


@dataclass(frozen=True)
class ConvergenceRow:
    resolution: float
    error_rho_l2: float
    error_m: float
    observed_order: float | None = None

    HEADER = ("resolution", "error_rho_l2", "error_m", "observed_order")

    def row(self):
        return (self.resolution, self.error_rho_l2, self.error_m, self.observed_order)


def _order(e_prev, e, h_prev, h):
    tiny = np.finfo(float).tiny
    return math.log(max(e_prev, tiny) / max(e, tiny)) / math.log(h_prev / h)


def run_convergence(case, resolutions=None, dt_list=None, config=None, nx=64, ny=4):
    """Error table for a manufactured case.

    Stationary cases refine the grid over ``resolutions`` (values of ``nx``)
    and measure the true L2 error of the piecewise-constant density.
    Transient cases refine the step over ``dt_list`` on a fixed ``nx`` grid
    and measure the final-time error against the cell means of the exact
    density, which removes the spatial part.  ``error_m`` is the largest
    face-normal flux error (at the final time for transient cases).
    """
    config = config or SolverConfig()
    rows = []
    if not case.transient:
        if resolutions is None or len(resolutions) < 3:
            raise ValueError("need at least three resolutions")
        prev = None
        for n in resolutions:
            grid = case.grid(int(n), ny)
            problem = StationaryProblem(case.law, grid, case.source_field(grid), case.rho_b(grid))
            m, rho, _ = solve_stationary(problem, config)
            e_rho = l2_error(rho, lambda x: case.exact_rho(x, 0.0))
            e_m = float(np.max(np.abs((m - case.m_field(grid)).vector)))
            h = grid.hx
            order = _order(prev[0], e_rho, prev[1], h) if prev else None
            rows.append(ConvergenceRow(int(n), e_rho, e_m, order))
            prev = (e_rho, h)
        return rows

    if dt_list is None or len(dt_list) < 3:
        raise ValueError("need at least three time steps")
    grid = case.grid(nx, ny)
    phi = porosity_field(grid, case.phi, case.phi)
    prev = None
    for dt in dt_list:
        J = int(round(case.T / dt))
        if J < 1 or abs(J * dt - case.T) > 1e-9 * case.T:
            raise ValueError(f"dt={dt:g} does not divide T={case.T:g}")
        problem = TransientProblem(
            case.law, grid, phi, lambda t: case.source_field(grid, t),
            lambda t: case.rho_b(grid, t), case.rho_field(grid, 0.0), case.T, J,
        )
        result = run_transient(problem, config)
        T = float(result.times[-1])
        diff = result.rho[-1] - case.rho_field(grid, T)
        e_rho = float(np.sqrt(np.sum(diff.values**2) * grid.cell_volume))
        e_m = float(np.max(np.abs((result.m[-1] - case.m_field(grid, T)).vector)))
        order = _order(prev[0], e_rho, prev[1], dt) if prev else None
        rows.append(ConvergenceRow(float(dt), e_rho, e_m, order))
        prev = (e_rho, dt)
    return rows


def write_convergence_csv(path, rows):
    return csvio.write_rows(path, ConvergenceRow.HEADER, (r.row() for r in rows))


@dataclass
class LawReport:
    label: str
    n_samples: int
    continuity_violations: int
    monotonicity_violations: int
    worst_continuity_margin: float
    worst_monotonicity_margin: float
    roundtrip_max_error: float
    roundtrip_violations: int
    k_monotone_violations: int
    offending: list = field(default_factory=list)

    @property
    def violations(self):
        return (self.continuity_violations + self.monotonicity_violations
                + self.roundtrip_violations + self.k_monotone_violations)


@dataclass
class PropertyReport:
    laws: list
    seed: int

    HEADER = (
        "law", "n_samples", "continuity_violations", "monotonicity_violations",
        "worst_continuity_margin", "worst_monotonicity_margin", "roundtrip_max_error",
        "roundtrip_violations", "k_monotone_violations",
    )

    @property
    def ok(self):
        return all(r.violations == 0 for r in self.laws)

    def rows(self):
        for r in self.laws:
            yield (r.label, r.n_samples, r.continuity_violations, r.monotonicity_violations,
                   r.worst_continuity_margin, r.worst_monotonicity_margin,
                   r.roundtrip_max_error, r.roundtrip_violations, r.k_monotone_violations)


def law_label(law):
    exps = ",".join(f"{a:g}" for a in law.exponents)
    coefs = ",".join(f"{c:g}" if not callable(c) else "fn" for c in law.coefficients)
    return f"alpha=({exps});a=({coefs})"


def sample_pairs(rng, n, d, near_fraction=0.2):
    """Random vector pairs with log-uniform magnitudes in ``[1e-3, 1e2]``.

    A fraction of pairs is nearly collinear and nearly equal, and a few
    contain exact zeros.
    """
    def vectors(k):
        v = rng.normal(size=(k, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * 10.0 ** rng.uniform(-3, 2, (k, 1))

    y1, y2 = vectors(n), vectors(n)
    k = int(near_fraction * n)
    rel = 10.0 ** rng.uniform(-10, -3, (k, 1))
    y2[:k] = y1[:k] * (1.0 + rel) + rel * np.linalg.norm(y1[:k], axis=1, keepdims=True) * rng.normal(size=(k, d))
    z = max(1, n // 1000)
    y1[k:k + z] = 0.0
    return y1, y2


def run_property_harness(laws: Sequence[ForchheimerLaw], n_samples=10_000, seed=0,
                         dims=(2, 3), floor=-1e-14, roundtrip_tol=1e-8, max_offending=5):
    """Randomized check of the continuity and monotonicity bounds and of the inverse.

    For each law and each dimension in ``dims``, ``n_samples`` pairs are
    drawn; a margin below ``floor`` is a violation.  Margins are relative to
    the magnitude of the two sides of each inequality, so the floor absorbs
    round-off on bounds that hold with equality (Darcy) or nearly so.  The round trip
    ``gradient_from_flux(flux_from_gradient(g))`` must return ``g`` to within
    ``roundtrip_tol (1 + |g|)`` for ``|g| <= 1e3``, and ``K`` must be
    non-increasing on a logarithmic grid.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    rng = np.random.default_rng(seed)
    reports = []
    for law in laws:
        consts = lemma_constants(law)
        cont_v = mono_v = rt_v = 0
        worst_c = worst_m = np.inf
        rt_err = 0.0
        offending = []
        for d in dims:
            x, t = _law_point(law, rng, n_samples)
            y1, y2 = sample_pairs(rng, n_samples, d)
            mc = np.asarray(check_continuity_bound(law, x, t, y1, y2, consts, relative=True))
            mm = np.asarray(check_monotonicity_bound(law, x, t, y1, y2, consts, relative=True))
            cont_v += int(np.sum(mc < floor))
            mono_v += int(np.sum(mm < floor))
            worst_c = min(worst_c, float(mc.min()))
            worst_m = min(worst_m, float(mm.min()))
            for kind, margins in (("continuity", mc), ("monotonicity", mm)):
                for i in np.nonzero(margins < floor)[0][: max_offending - len(offending)]:
                    offending.append({"kind": kind, "y1": y1[i].tolist(), "y2": y2[i].tolist(),
                                      "margin": float(margins[i])})

            g = rng.normal(size=(n_samples, d))
            g *= 10.0 ** rng.uniform(-6, 3, (n_samples, 1)) / np.linalg.norm(g, axis=1, keepdims=True)
            back = gradient_from_flux(law, x, t, flux_from_gradient(law, x, t, g))
            err = np.linalg.norm(back - g, axis=1)
            rel = err / (1.0 + np.linalg.norm(g, axis=1))
            rt_err = max(rt_err, float(rel.max()))
            rt_v += int(np.sum(rel > roundtrip_tol))

        xi = np.concatenate([[0.0], np.logspace(-6, 3, 2000)])
        k_vals = np.asarray(eval_K(law, _law_point(law, rng, 1)[0], 0.0, xi))
        k_v = int(np.sum(np.diff(k_vals) > 1e-14 * k_vals[:-1]))
        reports.append(LawReport(
            label=law_label(law), n_samples=n_samples * len(dims),
            continuity_violations=cont_v, monotonicity_violations=mono_v,
            worst_continuity_margin=worst_c, worst_monotonicity_margin=worst_m,
            roundtrip_max_error=rt_err, roundtrip_violations=rt_v,
            k_monotone_violations=k_v, offending=offending,
        ))
    return PropertyReport(reports, seed)


def _law_point(law, rng, n):
    """Sample positions only when the law needs them."""
    if law.is_constant:
        return None, 0.0
    return rng.uniform(0.0, 1.0, (n, 2)), float(rng.uniform())


def write_properties_csv(path, report):
    return csvio.write_rows(path, PropertyReport.HEADER, report.rows())


def lemma_law_families():
    """Four constant-coefficient laws covering Darcy, Ward, fractional and sparse exponents."""
    return [
        ForchheimerLaw.ward(1.0, 1.0),
        ForchheimerLaw((0.0, 0.5, 1.0, 2.0), (1.0, 1.0, 1.0, 1.0)),
        ForchheimerLaw.darcy(2.0),
        ForchheimerLaw((0.0, 0.3, 1.7, 3.0), (2.0, 0.5, 0.0, 1.5)),
    ]


def make_dirichlet_2d_problem(law, nx=16, ny=16):
    """Unit square with smooth non-constant Dirichlet data on all four sides and a source."""
    grid = build_grid(nx, ny)

    def rho_b(x, y):
        return 1.0 + x - 0.5 * y + 0.25 * np.sin(np.pi * x) * np.cos(np.pi * y)

    f = cell_average(grid, lambda p: 1.0 + p[..., 0] * p[..., 1])
    return StationaryProblem(law, grid, f, BoundaryTrace.from_function(grid, rho_b))


def make_transient_2d_problem(law, nx=16, ny=16, T=1.0, J=50):
    """Homogeneous Dirichlet problem with variable porosity and a time-Lipschitz source."""
    grid = build_grid(nx, ny)
    phi = porosity_field(
        grid, cell_average(grid, lambda p: 0.75 + 0.25 * np.sin(np.pi * p[..., 0]) * p[..., 1]),
        0.5, 1.0,
    )
    rho0 = cell_average(grid, lambda p: np.sin(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1]))
    shape = cell_average(grid, lambda p: p[..., 0] * (1.0 - p[..., 0]) * p[..., 1])

    def f(t):
        return shape * (1.0 + 0.5 * t)

    return TransientProblem(law, grid, phi, f, BoundaryTrace.zeros(grid), rho0, T, J,
                            lipschitz_L=1.0)


def make_dissipation_problem(law, nx=16, ny=16, T=1.0, J=200, seed=0):
    """Zero source and boundary data, unit porosity, random initial density."""
    grid = build_grid(nx, ny)
    rng = np.random.default_rng(seed)
    rho0 = CellField(grid, rng.uniform(-1.0, 1.0, (nx, ny)))
    return TransientProblem(law, grid, CellField.constant(grid, 1.0), CellField.zeros(grid),
                            BoundaryTrace.zeros(grid), rho0, T, J)
