"""Exception types raised by the solver stack."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of a constitutive function."""


class RootSolveError(RuntimeError):
    """The scalar inversion of z*F(z) = xi did not converge."""

    def __init__(self, message, bracket=None, residual=None):
        super().__init__(message)
        self.bracket = bracket
        self.residual = residual


class LinearSolveError(RuntimeError):
    """A saddle-point solve missed its residual target."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class PicardError(RuntimeError):
    """Picard iteration exhausted its budget without converging.

    Carries the last iterate and the residual history so callers can inspect
    how far the iteration got.
    """

    def __init__(self, message, m=None, rho=None, residuals=(), eps=None):
        super().__init__(message)
        self.m = m
        self.rho = rho
        self.residuals = list(residuals)
        self.eps = eps


class TransientError(RuntimeError):
    """A time step failed; the trajectory computed so far is attached."""

    def __init__(self, message, trajectory, diagnostics, cause=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.diagnostics = diagnostics
        self.cause = cause


class ConfigError(ValueError):
    """A run configuration failed validation; ``errors`` lists every problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
