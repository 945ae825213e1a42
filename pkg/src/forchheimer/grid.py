"""Uniform rectangular mesh carrying the mixed pair (cell densities, face fluxes).

Cells are indexed ``(i, j)`` with ``i`` along x.  Face-normal fluxes live on
x-faces (shape ``(nx+1, ny)``) and y-faces (shape ``(nx, ny+1)``); the flat
face vector is the x-faces followed by the y-faces, both in C order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import csvio


@dataclass(frozen=True)
class CartesianGrid:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("nx and ny must be integers")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("nx and ny must be positive")
        if not (self.lx > 0 and self.ly > 0 and np.isfinite(self.lx) and np.isfinite(self.ly)):
            raise ValueError("domain lengths must be positive and finite")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "lx", float(self.lx))
        object.__setattr__(self, "ly", float(self.ly))

    @property
    def hx(self):
        return self.lx / self.nx

    @property
    def hy(self):
        return self.ly / self.ny

    @property
    def cell_volume(self):
        return self.hx * self.hy

    @property
    def n_cells(self):
        return self.nx * self.ny

    @property
    def n_xfaces(self):
        return (self.nx + 1) * self.ny

    @property
    def n_yfaces(self):
        return self.nx * (self.ny + 1)

    @property
    def n_faces(self):
        return self.n_xfaces + self.n_yfaces

    def cell_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1)

    def xface_centers(self):
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1)

    def yface_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1)

    def face_centers(self):
        """Face midpoints in flat face order, shape ``(n_faces, 2)``."""
        return np.concatenate(
            [self.xface_centers().reshape(-1, 2), self.yface_centers().reshape(-1, 2)]
        )

    def face_volumes(self):
        """Lumped control volume of each face: a full cell inside, half on the boundary."""
        vx = np.full((self.nx + 1, self.ny), self.cell_volume)
        vx[[0, -1], :] *= 0.5
        vy = np.full((self.nx, self.ny + 1), self.cell_volume)
        vy[:, [0, -1]] *= 0.5
        return np.concatenate([vx.ravel(), vy.ravel()])

    def boundary_faces(self):
        """Flat indices, outward-normal signs and areas of the boundary faces.

        Ordered west, east, south, north to match ``BoundaryTrace.vector``.
        """
        nx, ny = self.nx, self.ny
        west = np.arange(ny)
        east = nx * ny + np.arange(ny)
        south = self.n_xfaces + np.arange(nx) * (ny + 1)
        north = south + ny
        idx = np.concatenate([west, east, south, north])
        sign = np.concatenate([-np.ones(ny), np.ones(ny), -np.ones(nx), np.ones(nx)])
        area = np.concatenate([np.full(2 * ny, self.hy), np.full(2 * nx, self.hx)])
        return idx, sign, area

    def cell_index(self, i, j):
        return i * self.ny + j

    def xface_index(self, i, j):
        return i * self.ny + j

    def yface_index(self, i, j):
        return self.n_xfaces + i * (self.ny + 1) + j


def build_grid(nx, ny, lx=1.0, ly=1.0):
    return CartesianGrid(nx, ny, lx, ly)


class CellField:
    """Piecewise-constant cell values (density, porosity or source)."""

    def __init__(self, grid, values):
        values = np.array(values, dtype=float)
        if values.shape != (grid.nx, grid.ny):
            if values.size == grid.n_cells:
                values = values.reshape(grid.nx, grid.ny)
            else:
                raise ValueError(
                    f"cell field needs shape {(grid.nx, grid.ny)}, got {values.shape}"
                )
        if not np.all(np.isfinite(values)):
            raise ValueError("cell field has non-finite entries")
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.nx, grid.ny)))

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full((grid.nx, grid.ny), float(value)))

    @classmethod
    def from_function(cls, grid, fn):
        c = grid.cell_centers()
        return cls(grid, np.broadcast_to(fn(c[..., 0], c[..., 1]), (grid.nx, grid.ny)))

    @property
    def vector(self):
        return self.values.ravel()

    def __add__(self, other):
        return CellField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return CellField(self.grid, self.values - _vals(other))

    def __mul__(self, c):
        return CellField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return CellField(self.grid, -self.values)

    def __repr__(self):
        return f"CellField(nx={self.grid.nx}, ny={self.grid.ny})"


def porosity_field(grid, values, phi_min, phi_max=np.inf):
    """Porosity cell field, checked against ``0 < phi_min <= phi <= phi_max``."""
    if not phi_min > 0:
        raise ValueError("porosity lower bound must be positive")
    field = values if isinstance(values, CellField) else CellField(grid, np.broadcast_to(values, (grid.nx, grid.ny)))
    if np.any(field.values < phi_min) or np.any(field.values > phi_max):
        raise ValueError(f"porosity outside [{phi_min}, {phi_max}]")
    return field


class FaceField:
    """Face-normal flux components on x-faces and y-faces."""

    def __init__(self, grid, x, y):
        x = np.array(x, dtype=float).reshape(grid.nx + 1, grid.ny)
        y = np.array(y, dtype=float).reshape(grid.nx, grid.ny + 1)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("face field has non-finite entries")
        self.grid = grid
        self.x = x
        self.y = y

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.nx + 1, grid.ny)), np.zeros((grid.nx, grid.ny + 1)))

    @classmethod
    def uniform(cls, grid, mx, my):
        return cls(grid, np.full((grid.nx + 1, grid.ny), float(mx)), np.full((grid.nx, grid.ny + 1), float(my)))

    @classmethod
    def from_vector(cls, grid, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (grid.n_faces,):
            raise ValueError(f"face vector needs length {grid.n_faces}, got {vec.shape}")
        return cls(grid, vec[: grid.n_xfaces], vec[grid.n_xfaces:])

    @classmethod
    def from_function(cls, grid, fn):
        """Sample the normal components of a vector field ``fn(x, y) -> (mx, my)``."""
        cx, cy = grid.xface_centers(), grid.yface_centers()
        mx = fn(cx[..., 0], cx[..., 1])[0]
        my = fn(cy[..., 0], cy[..., 1])[1]
        return cls(grid, np.broadcast_to(mx, cx.shape[:2]), np.broadcast_to(my, cy.shape[:2]))

    @property
    def vector(self):
        return np.concatenate([self.x.ravel(), self.y.ravel()])

    def __add__(self, other):
        return FaceField(self.grid, self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        return FaceField(self.grid, self.x - other.x, self.y - other.y)

    def __mul__(self, c):
        return FaceField(self.grid, self.x * c, self.y * c)

    __rmul__ = __mul__

    def __neg__(self):
        return FaceField(self.grid, -self.x, -self.y)

    def __repr__(self):
        return f"FaceField(nx={self.grid.nx}, ny={self.grid.ny})"


class BoundaryTrace:
    """Dirichlet density values on the boundary faces.

    Stored per side: ``west``/``east`` have ``ny`` entries (bottom to top),
    ``south``/``north`` have ``nx`` entries (left to right).  The values are
    the density itself on the boundary.
    """

    def __init__(self, grid, west, east, south, north):
        self.grid = grid
        self.west = np.broadcast_to(np.asarray(west, dtype=float), (grid.ny,)).copy()
        self.east = np.broadcast_to(np.asarray(east, dtype=float), (grid.ny,)).copy()
        self.south = np.broadcast_to(np.asarray(south, dtype=float), (grid.nx,)).copy()
        self.north = np.broadcast_to(np.asarray(north, dtype=float), (grid.nx,)).copy()
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("boundary trace has non-finite entries")

    @classmethod
    def zeros(cls, grid):
        return cls(grid, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_function(cls, grid, fn):
        """Evaluate ``fn(x, y)`` at boundary face midpoints."""
        yc = (np.arange(grid.ny) + 0.5) * grid.hy
        xc = (np.arange(grid.nx) + 0.5) * grid.hx
        return cls(
            grid,
            fn(np.zeros_like(yc), yc),
            fn(np.full_like(yc, grid.lx), yc),
            fn(xc, np.zeros_like(xc)),
            fn(xc, np.full_like(xc, grid.ly)),
        )

    @property
    def vector(self):
        return np.concatenate([self.west, self.east, self.south, self.north])

    @property
    def is_homogeneous(self):
        return not np.any(self.vector)

    def face_vector(self):
        """Trace scattered into a full-length face vector (zero on interior faces)."""
        out = np.zeros(self.grid.n_faces)
        idx, _, _ = self.grid.boundary_faces()
        out[idx] = self.vector
        return out


def _vals(other):
    return other.values if isinstance(other, CellField) else other


def divergence(grid, m):
    """Cell-wise ``(m_E - m_W)/hx + (m_N - m_S)/hy``."""
    if m.grid != grid:
        raise ValueError("face field belongs to a different grid")
    div = (m.x[1:, :] - m.x[:-1, :]) / grid.hx + (m.y[:, 1:] - m.y[:, :-1]) / grid.hy
    return CellField(grid, div)


def _tangential(grid, m):
    ycell = 0.5 * (m.y[:, :-1] + m.y[:, 1:])
    tx = np.empty((grid.nx + 1, grid.ny))
    tx[1:-1] = 0.5 * (ycell[:-1] + ycell[1:])
    tx[0], tx[-1] = ycell[0], ycell[-1]
    xcell = 0.5 * (m.x[:-1, :] + m.x[1:, :])
    ty = np.empty((grid.nx, grid.ny + 1))
    ty[:, 1:-1] = 0.5 * (xcell[:, :-1] + xcell[:, 1:])
    ty[:, 0], ty[:, -1] = xcell[:, 0], xcell[:, -1]
    return tx, ty


def face_flux_magnitude(grid, m, face=None):
    """``|m|`` at faces from the normal component and a neighbour-averaged tangential one.

    Returns the full flat array when ``face`` is None, else the value at that
    flat face index.
    """
    tx, ty = _tangential(grid, m)
    mag = np.concatenate([np.hypot(m.x, tx).ravel(), np.hypot(m.y, ty).ravel()])
    if face is None:
        return mag
    if not 0 <= face < grid.n_faces:
        raise IndexError(f"face index {face} out of range")
    return float(mag[face])


def face_vectors(grid, m):
    """Reconstructed full flux vectors ``(n_faces, 2)`` at face midpoints."""
    tx, ty = _tangential(grid, m)
    vx = np.concatenate([m.x.ravel(), ty.ravel()])
    vy = np.concatenate([tx.ravel(), m.y.ravel()])
    return np.stack([vx, vy], axis=-1)


class Norms(NamedTuple):
    l2: float
    ls: float
    hdiv: float | None


def norms(field, s=2.0):
    """Volume-weighted discrete L2, L^s and (faces only) W(div) norms.

    For face fields the L^s norm averages the x- and y-face quadratures of
    ``|m|**s``, so a unit vector field has unit norm on a unit domain.
    """
    grid = field.grid
    if isinstance(field, CellField):
        v = np.abs(field.values)
        l2 = float(np.sqrt(np.sum(v**2) * grid.cell_volume))
        ls = float((np.sum(v**s) * grid.cell_volume) ** (1.0 / s))
        return Norms(l2, ls, None)
    vol = grid.face_volumes()
    l2 = float(np.sqrt(np.sum(vol * field.vector**2)))
    mag = face_flux_magnitude(grid, field)
    ls = float((0.5 * np.sum(vol * mag**s)) ** (1.0 / s))
    hdiv = ls + norms(divergence(grid, field)).l2
    return Norms(l2, ls, hdiv)


def inner(a, b):
    """L2 inner product of two cell fields."""
    return float(np.sum(a.values * b.values) * a.grid.cell_volume)


def write_cells_csv(path, field):
    grid = field.grid
    c = grid.cell_centers()
    rows = (
        (i, j, c[i, j, 0], c[i, j, 1], field.values[i, j])
        for i in range(grid.nx)
        for j in range(grid.ny)
    )
    return csvio.write_rows(path, ["cell_i", "cell_j", "x_center", "y_center", "value"], rows)


def write_faces_csv(path, m):
    grid = m.grid
    cx, cy = grid.xface_centers(), grid.yface_centers()
    rows = [
        ("x", i, j, cx[i, j, 0], cx[i, j, 1], m.x[i, j])
        for i in range(grid.nx + 1)
        for j in range(grid.ny)
    ]
    rows += [
        ("y", i, j, cy[i, j, 0], cy[i, j, 1], m.y[i, j])
        for i in range(grid.nx)
        for j in range(grid.ny + 1)
    ]
    return csvio.write_rows(path, ["face_type", "i", "j", "x", "y", "normal_component"], rows)
