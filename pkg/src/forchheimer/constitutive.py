"""Generalized Forchheimer law F(z) = sum_i a_i z**alpha_i and its inverse.

The momentum equation reads ``F(|m|) m = -grad(rho)``.  Given a gradient
``g`` the flux is recovered through the scalar root ``s`` of ``s F(s) = |g|``:
``m = -g / F(s)``.  Every function here is vectorized over leading array
dimensions; vectors live on the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import DomainError, RootSolveError

Coefficient = Union[float, Callable[[np.ndarray, float], np.ndarray]]

ROOT_TOL = 1e-12
ROOT_MAX_ITER = 200


@dataclass(frozen=True)
class ForchheimerLaw:
    """Exponents ``0 = alpha_0 < ... < alpha_N`` and coefficients ``a_i(x, t)``.

    Coefficients are either non-negative constants or callables
    ``a(x, t)`` taking positions of shape ``(..., d)``.  ``a_lower`` and
    ``a_upper`` are the declared bounds on ``a_0, a_N`` and on all ``a_i``;
    for constant laws they default to the extreme coefficient values.
    """

    exponents: tuple
    coefficients: tuple
    a_lower: float | None = None
    a_upper: float | None = None

    def __post_init__(self):
        exps = tuple(float(e) for e in self.exponents)
        coefs = tuple(c if callable(c) else float(c) for c in self.coefficients)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "coefficients", coefs)
        if len(exps) == 0 or exps[0] != 0.0:
            raise ValueError("exponents must start with alpha_0 = 0")
        if any(b <= a for a, b in zip(exps, exps[1:])):
            raise ValueError("exponents not strictly increasing")
        if not all(np.isfinite(exps)):
            raise ValueError("exponents must be finite")
        if len(coefs) != len(exps):
            raise ValueError(
                f"need {len(exps)} coefficients for {len(exps)} exponents, got {len(coefs)}"
            )
        consts = [c for c in coefs if not callable(c)]
        if any(c < 0 or not np.isfinite(c) for c in consts):
            raise ValueError("coefficients must be finite and non-negative")
        if self.is_constant:
            ends = (coefs[0], coefs[-1])
            if self.a_lower is None:
                object.__setattr__(self, "a_lower", min(ends))
            if self.a_upper is None:
                object.__setattr__(self, "a_upper", max(coefs))
        elif self.a_lower is None or self.a_upper is None:
            raise ValueError("laws with variable coefficients need a_lower and a_upper")
        if not 0 < self.a_lower <= self.a_upper:
            raise ValueError("require 0 < a_lower <= a_upper")
        if self.is_constant:
            self.check_bounds(None, 0.0)

    @classmethod
    def ward(cls, a0=1.0, a1=1.0):
        """Two-term law ``a0 + a1 z`` (Darcy plus quadratic drag)."""
        return cls((0.0, 1.0), (a0, a1))

    @classmethod
    def darcy(cls, a0=1.0):
        return cls((0.0,), (a0,))

    @property
    def N(self):
        return len(self.exponents) - 1

    @property
    def degree(self):
        return self.exponents[-1]

    @property
    def s(self):
        """Integrability exponent of the flux, ``alpha_N + 2``."""
        return self.exponents[-1] + 2.0

    @property
    def s_star(self):
        return self.s / (self.s - 1.0)

    @property
    def is_constant(self):
        return not any(callable(c) for c in self.coefficients)

    def coefficient_values(self, x, t):
        """Sample every ``a_i`` at positions ``x`` and time ``t``."""
        out = []
        for c in self.coefficients:
            if callable(c):
                if x is None:
                    raise ValueError("position required for variable coefficients")
                out.append(np.asarray(c(np.asarray(x, dtype=float), t), dtype=float))
            else:
                out.append(c)
        return out

    def check_bounds(self, x, t):
        """Raise ``DomainError`` if sampled coefficients leave the declared bounds."""
        vals = self.coefficient_values(x, t)
        lo, hi = self.a_lower, self.a_upper
        for i, a in enumerate(vals):
            a = np.asarray(a)
            if not np.all(np.isfinite(a)) or np.any(a < 0) or np.any(a > hi):
                raise DomainError(f"coefficient a_{i} outside [0, {hi}]")
            if i in (0, self.N) and np.any(a < lo):
                raise DomainError(f"coefficient a_{i} below a_lower={lo}")


@dataclass(frozen=True)
class LemmaConstants:
    """Continuity (c1) and monotonicity (c2) constants of the flux map."""

    c1: float
    c2: float


def lemma_constants(law):
    """Constants read off the proofs of the continuity/monotonicity bounds.

    ``c1 = 2**aN (1 + aN) (N + 1) max a_i`` and
    ``c2 = (1 + a1) min(a0, a_N / (2**(aN+1) (aN + 1)))``; the pure Darcy case
    uses ``c2 = a0``.
    """
    alpha_n = law.exponents[-1]
    if law.is_constant:
        a_max = max(law.coefficients)
        a0_min, an_min = law.coefficients[0], law.coefficients[-1]
    else:
        a_max = law.a_upper
        a0_min = an_min = law.a_lower
    c1 = 2.0**alpha_n * (1.0 + alpha_n) * (law.N + 1) * a_max
    if law.N == 0:
        c2 = a0_min
    else:
        alpha_1 = law.exponents[1]
        c2 = (1.0 + alpha_1) * min(a0_min, an_min / (2.0 ** (alpha_n + 1) * (alpha_n + 1)))
    return LemmaConstants(c1=c1, c2=c2)


def _as_nonneg(z, name="z"):
    z = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(z)):
        raise DomainError(f"{name} must be finite")
    if np.any(z < 0):
        raise DomainError(f"{name} must be non-negative")
    return z


def _scalar_or_array(values, like):
    return float(values) if np.ndim(like) == 0 and np.ndim(values) == 0 else values


def eval_F(law, x, t, z):
    """``F(x, t, z)``; always ``>= a_0 > 0``."""
    z = _as_nonneg(z)
    a = law.coefficient_values(x, t)
    total = a[0] * np.ones_like(z)
    for ai, alpha in zip(a[1:], law.exponents[1:]):
        total = total + ai * z**alpha
    return _scalar_or_array(total, z)


def eval_Fz(law, x, t, z):
    """Derivative ``dF/dz``.

    At ``z = 0`` the one-sided limit is returned: ``+inf`` when a fractional
    exponent below one carries a positive coefficient.
    """
    z = _as_nonneg(z)
    a = law.coefficient_values(x, t)
    total = np.zeros(np.broadcast_shapes(np.shape(z), *(np.shape(ai) for ai in a)))
    with np.errstate(divide="ignore", invalid="ignore"):
        for ai, alpha in zip(a[1:], law.exponents[1:]):
            ai = np.broadcast_to(ai, total.shape)
            term = np.where(
                z > 0,
                ai * alpha * np.where(z > 0, z, 1.0) ** (alpha - 1.0),
                np.where(alpha < 1.0, np.where(ai > 0, np.inf, 0.0),
                         np.where(alpha == 1.0, ai, 0.0)),
            )
            total = total + term
    return _scalar_or_array(total, z)


def _zF_and_slope(a, exponents, s):
    val = np.zeros_like(s)
    slope = np.zeros_like(s)
    for ai, alpha in zip(a, exponents):
        p = s**alpha
        val += ai * p
        slope += ai * (1.0 + alpha) * p
    return s * val, slope


def solve_s(law, x, t, xi, root_tol=ROOT_TOL, max_iter=ROOT_MAX_ITER):
    """Unique non-negative root ``s`` of ``s F(s) = xi``.

    Newton iteration started from the smaller of the two a-priori upper bounds
    ``xi/a0`` and ``(xi/a_N)**(1/(1+alpha_N))``; z F(z) is increasing and
    convex so Newton descends monotonically, but every step is still kept
    inside a bisection bracket ``[0, xi/a0 + 1]``.
    """
    xi = _as_nonneg(xi, "xi")
    a = law.coefficient_values(x, t)
    shape = np.broadcast_shapes(np.shape(xi), *(np.shape(ai) for ai in a))
    xi_b = np.broadcast_to(xi, shape).astype(float)
    a = [np.broadcast_to(np.asarray(ai, dtype=float), shape) for ai in a]
    a0, an = a[0], a[-1]

    lo = np.zeros(shape)
    hi = xi_b / a0 + 1.0
    s = xi_b / a0
    if law.N > 0:
        with np.errstate(divide="ignore"):
            cap = np.where(an > 0, (xi_b / np.where(an > 0, an, 1.0)) ** (1.0 / (1.0 + law.degree)), np.inf)
        s = np.minimum(s, cap)
    target = root_tol * np.maximum(1.0, xi_b)

    s = s.reshape(-1).copy()
    lo, hi = lo.reshape(-1), hi.reshape(-1)
    xi_f, target = xi_b.reshape(-1), target.reshape(-1)
    a_f = [ai.reshape(-1) for ai in a]
    active = np.arange(s.size)
    for _ in range(max_iter):
        if active.size == 0:
            break
        sa = s[active]
        val, slope = _zF_and_slope([ai[active] for ai in a_f], law.exponents, sa)
        g = val - xi_f[active]
        done = np.abs(g) <= target[active]
        lo[active] = np.where(g < 0, sa, lo[active])
        hi[active] = np.where(g > 0, sa, hi[active])
        step = sa - g / slope
        la, ha = lo[active], hi[active]
        bad = ~np.isfinite(step) | (step < la) | (step > ha)
        step = np.where(bad, 0.5 * (la + ha), step)
        s[active] = np.where(done, sa, step)
        active = active[~done]
    if active.size:
        val, _ = _zF_and_slope([ai[active] for ai in a_f], law.exponents, s[active])
        worst = active[np.argmax(np.abs(val - xi_f[active]))]
        raise RootSolveError(
            f"s F(s) = xi not solved in {max_iter} iterations for xi={xi_f[worst]!r}",
            bracket=(lo[worst], hi[worst]),
            residual=float(np.max(np.abs(val - xi_f[active]))),
        )
    s = s.reshape(shape)
    return _scalar_or_array(s, xi)


def eval_K(law, x, t, xi, root_tol=ROOT_TOL):
    """``K(xi) = 1 / F(s(xi))``, bounded by ``1/a0`` and non-increasing."""
    s = solve_s(law, x, t, xi, root_tol=root_tol)
    return _scalar_or_array(1.0 / np.asarray(eval_F(law, x, t, s)), np.asarray(xi))


def _magnitude(v):
    v = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(v)):
        raise DomainError("vector entries must be finite")
    return v, np.linalg.norm(v, axis=-1)


def flux_from_gradient(law, x, t, g, root_tol=ROOT_TOL):
    """``m = -K(|g|) g``; ``|m|`` equals the root ``s(|g|)``."""
    g, mag = _magnitude(g)
    k = np.asarray(eval_K(law, x, t, mag, root_tol=root_tol))
    return -k[..., None] * g


def gradient_from_flux(law, x, t, m):
    """``g = -F(|m|) m``, the exact forward map."""
    m, mag = _magnitude(m)
    f = np.asarray(eval_F(law, x, t, mag))
    return -f[..., None] * m


def _flux_map(law, x, t, y):
    _, mag = _magnitude(y)
    return np.asarray(eval_F(law, x, t, mag))[..., None] * y


def _margin(bound, lhs, relative):
    margin = bound - lhs
    if relative:
        scale = np.abs(bound) + np.abs(lhs)
        margin = np.where(scale > 0, margin / np.where(scale > 0, scale, 1.0), 0.0)
    return margin


def check_continuity_bound(law, x, t, y1, y2, constants=None, relative=False):
    """Margin ``c1 (1 + |y1|^aN + |y2|^aN)|y1 - y2| - |F(|y1|)y1 - F(|y2|)y2|``.

    With ``relative=True`` the margin is divided by the sum of the magnitudes
    of both sides, so round-off is measured on a unit scale.
    """
    c = constants or lemma_constants(law)
    y1, n1 = _magnitude(y1)
    y2, n2 = _magnitude(y2)
    alpha_n = law.degree
    lhs = np.linalg.norm(_flux_map(law, x, t, y1) - _flux_map(law, x, t, y2), axis=-1)
    bound = c.c1 * (1.0 + n1**alpha_n + n2**alpha_n) * np.linalg.norm(y1 - y2, axis=-1)
    return _scalar_or_array(_margin(bound, lhs, relative), n1)


def check_monotonicity_bound(law, x, t, y1, y2, constants=None, relative=False):
    """Margin ``(F(|y1|)y1 - F(|y2|)y2).(y1 - y2) - c2 (|d|^2 + |d|^s)``.

    For the pure Darcy law only the quadratic term is subtracted (the bound
    then holds with equality).  ``relative`` as for the continuity bound.
    """
    c = constants or lemma_constants(law)
    y1, n1 = _magnitude(y1)
    y2, _ = _magnitude(y2)
    d = y1 - y2
    dn = np.linalg.norm(d, axis=-1)
    lhs = np.sum((_flux_map(law, x, t, y1) - _flux_map(law, x, t, y2)) * d, axis=-1)
    if law.N == 0:
        bound = c.c2 * dn**2
    else:
        bound = c.c2 * (dn**2 + dn**law.s)
    return _scalar_or_array(-_margin(bound, lhs, relative), n1)

