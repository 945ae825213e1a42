"""Picard iteration, epsilon continuation and the implicit Euler loop.

Each nonlinear solve freezes the face weights ``F(|m|)`` at the previous
iterate, solves the resulting linear saddle system, and repeats until the
flux settles and the re-assembled residual is below ``picard_tol``.  The
transient driver records the discrete energy balance and the a-priori
norm monitors at every step.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .assembly import (
    LinearSolveConfig,
    SaddleAssembler,
    assemble_divergence_matrix,
    face_weights,
    solve_saddle,
)
from .constitutive import ROOT_TOL, flux_from_gradient
from .errors import PicardError, TransientError
from .grid import (
    BoundaryTrace,
    CellField,
    FaceField,
    divergence,
    face_vectors,
    inner,
    norms,
)

logger = logging.getLogger(__name__)

DEFAULT_EPS_SCHEDULE = (1e-2, 1e-4, 1e-6, 1e-8)


@dataclass(frozen=True)
class SolverConfig:
    eps_schedule: tuple = DEFAULT_EPS_SCHEDULE
    picard_tol: float = 1e-10
    picard_max_iter: int = 200
    lin: LinearSolveConfig = field(default_factory=LinearSolveConfig)
    root_tol: float = ROOT_TOL
    damping: float = 1.0

    def __post_init__(self):
        sched = tuple(float(e) for e in self.eps_schedule)
        object.__setattr__(self, "eps_schedule", sched)
        if not sched or any(e <= 0 for e in sched):
            raise ValueError("eps_schedule must be a non-empty list of positive values")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("eps_schedule must be strictly decreasing")
        if not self.picard_tol > 0 or not self.root_tol > 0:
            raise ValueError("tolerances must be positive")
        if self.picard_max_iter < 1:
            raise ValueError("picard_max_iter must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")

    @property
    def eps_min(self):
        return self.eps_schedule[-1]


@functools.lru_cache(maxsize=8)
def _div_matrix(grid):
    return assemble_divergence_matrix(grid)


@dataclass
class PicardResult:
    iterations: int
    residual: float
    residuals: list
    changes: list
    lin_residual: float


def picard_solve(law, grid, t, eps, eps_rho, c_mass, phi, f_bar, rho_b,
                 m_init=None, config=None):
    """Fixed-point iteration on the frozen-weight saddle system.

    Converged when the block-relative residual of the re-assembled system is
    below ``picard_tol`` and either the flux change or the weight change is
    too (the latter covers laws whose weights do not depend on ``m``).
    """
    config = config or SolverConfig()
    tol = config.picard_tol
    assembler = SaddleAssembler(grid, law, t, eps, eps_rho, c_mass, phi, f_bar, rho_b,
                                div_matrix=_div_matrix(grid))
    build = assembler.assemble
    m = m_init if m_init is not None else FaceField.zeros(grid)
    rho = None

    system = build(m)
    residuals, changes = [], []
    for k in range(1, config.picard_max_iter + 1):
        m_lin, rho, lin_res = solve_saddle(system, config.lin)
        if config.damping < 1.0:
            m_new = config.damping * m_lin + (1.0 - config.damping) * m
        else:
            m_new = m_lin
        v_new, v_old = m_new.vector, m.vector
        scale = np.linalg.norm(v_new)
        diff = np.linalg.norm(v_new - v_old)
        change = diff / scale if scale > 0 else (0.0 if diff == 0 else np.inf)
        next_system = build(m_new)
        w_old = system.weights
        weight_change = np.linalg.norm(next_system.weights - w_old) / np.linalg.norm(w_old)
        _, _, rel = next_system.block_residuals(v_new, rho.vector)
        residuals.append(rel)
        changes.append(change)
        m, system = m_new, next_system
        logger.debug("picard %d: change %.3e residual %.3e", k, change, rel)
        if rel <= tol and (change <= tol or weight_change <= tol):
            return m, rho, PicardResult(k, rel, residuals, changes, lin_res)
    raise PicardError(
        f"Picard did not converge in {config.picard_max_iter} iterations "
        f"(residual {residuals[-1]:.3e})",
        m=m, rho=rho, residuals=residuals, eps=eps,
    )


@dataclass
class StationaryProblem:
    law: object
    grid: object
    f: CellField
    rho_b: BoundaryTrace

    def __post_init__(self):
        if self.f.grid != self.grid or self.rho_b.grid != self.grid:
            raise ValueError("source and boundary data must live on the problem grid")


@dataclass
class EpsRecord:
    eps: float
    picard_iters: int
    nonlinear_residual: float
    norm_rho_l2: float
    norm_m_l2: float
    norm_m_ls: float
    norm_m_hdiv: float
    diff_rho: float | None
    diff_m: float | None
    bound_ratio_m: float
    bound_ratio_rho: float


@dataclass
class StationaryReport:
    records: list
    k1: float
    k2: float
    m_by_eps: list = field(repr=False, default_factory=list)
    rho_by_eps: list = field(repr=False, default_factory=list)

    @property
    def rho_differences(self):
        return [r.diff_rho for r in self.records[1:]]

    @property
    def max_bound_ratio(self):
        return max(max(r.bound_ratio_m, r.bound_ratio_rho) for r in self.records)


def boundary_dual_proxy(rho_b):
    """Surface L2 norm of the boundary data, used in place of its dual norm."""
    _, _, area = rho_b.grid.boundary_faces()
    return float(np.sqrt(np.sum(area * rho_b.vector**2)))


def stationary_envelopes(law, f, rho_b):
    """Bound quantities ``K1`` and ``K2`` from the data norms."""
    s = law.s
    b = boundary_dual_proxy(rho_b)
    nf = norms(f).l2
    k1 = (b + nf) * (b + nf**2) + b**s + nf**s + 1.0
    k2 = k1 ** (1.0 / s) + k1 ** ((s - 1.0) / s) + nf**2 + b
    return k1, k2


def solve_stationary(problem, config=None, m_init=None):
    """Solve the regularized stationary problem along ``eps_schedule``.

    Each stage warm-starts from the previous one.  The returned pair is the
    solution at the smallest epsilon; the report tracks norms, the
    differences between consecutive stages and the ratios of the norms to the
    data envelopes.
    """
    config = config or SolverConfig()
    law, grid = problem.law, problem.grid
    s = law.s
    k1, k2 = stationary_envelopes(law, problem.f, problem.rho_b)
    records, ms, rhos = [], [], []
    m = m_init
    rho = None
    for eps in config.eps_schedule:
        try:
            m, rho, info = picard_solve(law, grid, 0.0, eps, eps, 0.0, None, problem.f,
                                        problem.rho_b, m_init=m, config=config)
        except PicardError as exc:
            exc.eps = eps
            exc.records = records
            exc.args = (f"eps={eps:g}: {exc.args[0]}",)
            raise
        nm = norms(m, s)
        nr = norms(rho).l2
        diff_rho = norms(rho - rhos[-1]).l2 if rhos else None
        diff_m = norms(m - ms[-1]).l2 if ms else None
        records.append(EpsRecord(
            eps=eps, picard_iters=info.iterations, nonlinear_residual=info.residual,
            norm_rho_l2=nr, norm_m_l2=nm.l2, norm_m_ls=nm.ls, norm_m_hdiv=nm.hdiv,
            diff_rho=diff_rho, diff_m=diff_m,
            bound_ratio_m=nm.hdiv / (k1 + k2), bound_ratio_rho=nr / k2,
        ))
        ms.append(m)
        rhos.append(rho)
        logger.info("eps=%g: %d Picard iterations, |rho|=%.6g", eps, info.iterations, nr)
    return m, rho, StationaryReport(records, k1, k2, ms, rhos)


SamplerOrField = Union[CellField, Callable[[float], CellField]]


@dataclass
class TransientProblem:
    """Implicit Euler problem on ``[0, T]`` with ``J`` uniform steps.

    ``f`` and ``rho_b`` are either fixed fields or callables of time.  When
    ``lipschitz_L`` is given the coefficients and source are spot-checked
    against it at the step times.
    """

    law: object
    grid: object
    phi: CellField
    f: object
    rho_b: object
    rho0: CellField
    T: float
    J: int
    lipschitz_L: float | None = None
    phi_min: float | None = None
    phi_max: float | None = None

    def __post_init__(self):
        if self.phi.grid != self.grid or self.rho0.grid != self.grid:
            raise ValueError("porosity and initial data must live on the problem grid")
        if self.phi_min is None:
            self.phi_min = float(self.phi.values.min())
        if self.phi_max is None:
            self.phi_max = float(self.phi.values.max())
        if not self.phi_min > 0:
            raise ValueError("porosity must be bounded below by a positive constant (H1)")
        if np.any(self.phi.values < self.phi_min) or np.any(self.phi.values > self.phi_max):
            raise ValueError("porosity outside its declared bounds (H1)")
        if not (self.T > 0 and int(self.J) == self.J and self.J >= 1):
            raise ValueError("need T > 0 and a positive integer J")
        self.J = int(self.J)
        if self.lipschitz_L is not None:
            self._check_lipschitz()

    @property
    def dt(self):
        return self.T / self.J

    @property
    def times(self):
        return self.dt * np.arange(self.J + 1)

    def f_at(self, t):
        return self.f(t) if callable(self.f) else self.f

    def rho_b_at(self, t):
        return self.rho_b(t) if callable(self.rho_b) else self.rho_b

    def _check_lipschitz(self):
        L = self.lipschitz_L
        times = self.times
        x = self.grid.face_centers()
        slack = 1e-12
        prev_a = prev_f = None
        for t in times:
            a = [np.asarray(v) * np.ones(len(x)) for v in self.law.coefficient_values(x, t)]
            fv = self.f_at(t)
            if prev_a is not None:
                for i, (ai, pi) in enumerate(zip(a, prev_a)):
                    if np.max(np.abs(ai - pi)) > L * self.dt * (1 + slack) + slack:
                        raise ValueError(f"coefficient a_{i} violates the Lipschitz bound L={L}")
                if norms(fv - prev_f).l2 > L * self.dt * (1 + slack) + slack:
                    raise ValueError(f"source violates the Lipschitz bound L={L}")
            prev_a, prev_f = a, fv


@dataclass
class StepDiagnostics:
    j: int
    t: float
    picard_iters: int
    nonlinear_residual: float
    energy_identity_residual: float
    energy_scale: float
    norm_rho_l2: float
    norm_m_l2: float
    norm_m_ls: float
    drho_dt_sq: float
    cum_dt_drho2: float = 0.0
    gronwall_ratio: float = 0.0
    norm_rho_R: float = 0.0
    drho_dual_proxy: float = 0.0
    divm_dual_proxy: float = 0.0

    ROW_HEADER = (
        "j", "t_j", "picard_iters", "nonlinear_residual", "energy_identity_residual",
        "norm_rho_l2", "norm_m_l2", "norm_m_ls", "cum_dt_drho2", "gronwall_ratio",
    )

    def row(self):
        return (
            self.j, self.t, self.picard_iters, self.nonlinear_residual,
            self.energy_identity_residual, self.norm_rho_l2, self.norm_m_l2,
            self.norm_m_ls, self.cum_dt_drho2, self.gronwall_ratio,
        )


def energy_identity_residual(law, grid, phi, rho_prev, rho, m, t, dt, f, rho_b, eps=0.0):
    """Residual of the discrete energy balance at step ``j``; returns ``(r_j, 2 dt (f, rho))``.

    The balance is ``2dt a(m,m) + (phi, rho^2 - rho_prev^2 + (rho - rho_prev)^2)
    = 2dt (f, rho)``, extended by ``2dt eps |div m|^2`` on the left and by the
    boundary work ``-2dt <rho_b, m.n>`` on the right; both vanish for
    homogeneous data without regularization.
    """
    w = face_weights(grid, law, m, t)
    a_mm = float(np.sum(w * m.vector**2 * grid.face_volumes()))
    div_sq = norms(divergence(grid, m)).l2 ** 2
    storage = float(np.sum(phi.values * (rho.values**2 - rho_prev.values**2
                                          + (rho.values - rho_prev.values) ** 2)) * grid.cell_volume)
    forcing = 2.0 * dt * inner(f, rho)
    idx, sign, area = grid.boundary_faces()
    work = float(np.sum(rho_b.vector * sign * area * m.vector[idx]))
    r = abs(2.0 * dt * (a_mm + eps * div_sq) + storage - forcing + 2.0 * dt * work)
    return r, forcing


def step_transient(law, grid, phi, rho_prev, t_j, dt, f_j, rho_b_j, config=None,
                   m_init=None, j=0):
    """One implicit Euler step: ``phi (rho - rho_prev)/dt + div m = f``."""
    config = config or SolverConfig()
    if not dt > 0:
        raise ValueError("dt must be positive")
    f_bar = f_j + phi * rho_prev.values * (1.0 / dt)
    eps = config.eps_min
    m, rho, info = picard_solve(law, grid, t_j, eps, 0.0, 1.0 / dt, phi, f_bar, rho_b_j,
                                m_init=m_init, config=config)
    r, forcing = energy_identity_residual(law, grid, phi, rho_prev, rho, m, t_j, dt, f_j,
                                          rho_b_j, eps)
    nm = norms(m, law.s)
    drho = rho - rho_prev
    drho_dt_sq = norms(drho).l2 ** 2 / dt**2
    # norm of grad(rho) = -F(|m|) m in L^{s*}
    w = face_weights(grid, law, m, t_j)
    grad = FaceField.from_vector(grid, -w * m.vector)
    grad_ls = norms(grad, law.s_star).ls
    nf = norms(f_j).l2
    phi_min, phi_max = float(phi.values.min()), float(phi.values.max())
    diag = StepDiagnostics(
        j=j, t=t_j, picard_iters=info.iterations, nonlinear_residual=info.residual,
        energy_identity_residual=r, energy_scale=1.0 + abs(forcing),
        norm_rho_l2=norms(rho).l2, norm_m_l2=nm.l2, norm_m_ls=nm.ls,
        drho_dt_sq=drho_dt_sq,
        norm_rho_R=norms(rho).l2 + grad_ls,
        drho_dual_proxy=(nf + nm.ls) / phi_min,
        divm_dual_proxy=nf + phi_max * math.sqrt(drho_dt_sq),
    )
    return m, rho, diag


@dataclass
class TransientResult:
    times: np.ndarray
    rho: list
    m: list
    diagnostics: list

    @property
    def cum_dt_drho2(self):
        return self.diagnostics[-1].cum_dt_drho2 if self.diagnostics else 0.0

    @property
    def max_rho_norm(self):
        return max(norms(r).l2 for r in self.rho)

    @property
    def max_gronwall_ratio(self):
        return max((d.gronwall_ratio for d in self.diagnostics), default=0.0)


def run_transient(problem, config=None):
    """March ``J`` implicit Euler steps, warm-starting each Picard solve.

    ``dt`` must satisfy ``dt < phi_min / 2`` for the discrete Gronwall
    envelope to apply; the envelope ratio is reported per step, not asserted.
    """
    config = config or SolverConfig()
    dt, T = problem.dt, problem.T
    if not dt < 0.5 * problem.phi_min:
        raise ValueError(f"dt={dt:g} violates dt < phi_min/2 = {0.5 * problem.phi_min:g}")
    grid, law = problem.grid, problem.law
    times = problem.times
    ell = 1.0 / problem.phi_min
    f_all = [problem.f_at(t) for t in times]
    f_max_sq = max(norms(fj).l2 ** 2 for fj in f_all[1:])
    rho0_sq = norms(problem.rho0).l2 ** 2
    envelope = math.exp(2.0 * ell * T) * (rho0_sq + T * f_max_sq)

    rhos, ms, diags = [problem.rho0], [], []
    m = None
    cum = 0.0
    for j in range(1, problem.J + 1):
        t = float(times[j])
        try:
            m, rho, d = step_transient(law, grid, problem.phi, rhos[-1], t, dt, f_all[j],
                                       problem.rho_b_at(t), config, m_init=m, j=j)
        except Exception as exc:
            raise TransientError(
                f"step {j} (t={t:g}) failed: {exc}",
                TransientResult(times[:j], rhos, ms, diags), diags, cause=exc,
            ) from exc
        cum += dt * d.drho_dt_sq
        d.cum_dt_drho2 = cum
        d.gronwall_ratio = d.norm_rho_l2**2 / envelope if envelope > 0 else 0.0
        rhos.append(rho)
        ms.append(m)
        diags.append(d)
        logger.info("step %d t=%.4g picard=%d r=%.2e", j, t, d.picard_iters,
                    d.energy_identity_residual)
    return TransientResult(times, rhos, ms, diags)


def primal_residual(law, grid, rho, rho_b, t, m, root_tol=ROOT_TOL):
    """Flux from the primal law ``-K(|grad rho|) grad rho`` minus the solved flux.

    Normal gradients come from two-point differences (half cells at the
    boundary); tangential parts are neighbour averages as for ``|m|``.
    """
    r = rho.values
    gx = np.empty((grid.nx + 1, grid.ny))
    gx[1:-1] = (r[1:] - r[:-1]) / grid.hx
    gx[0] = (r[0] - rho_b.west) / (0.5 * grid.hx)
    gx[-1] = (rho_b.east - r[-1]) / (0.5 * grid.hx)
    gy = np.empty((grid.nx, grid.ny + 1))
    gy[:, 1:-1] = (r[:, 1:] - r[:, :-1]) / grid.hy
    gy[:, 0] = (r[:, 0] - rho_b.south) / (0.5 * grid.hy)
    gy[:, -1] = (rho_b.north - r[:, -1]) / (0.5 * grid.hy)
    grad = FaceField(grid, gx, gy)
    vec = face_vectors(grid, grad)
    flux = flux_from_gradient(law, grid.face_centers(), t, vec, root_tol=root_tol)
    nxf = grid.n_xfaces
    normal = np.concatenate([flux[:nxf, 0], flux[nxf:, 1]])
    return FaceField.from_vector(grid, normal - m.vector)
