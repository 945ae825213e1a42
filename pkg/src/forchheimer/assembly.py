"""Regularized mixed linear system for one frozen-coefficient (Picard) step.

Unknowns are the face fluxes ``m`` and cell densities ``rho``.  The system is

    [ W + eps B^T M^-1 B   -B^T ] [m  ]   [-<g, v.n>]
    [ B                     C   ] [rho] = [ M fbar  ]

with ``W`` the lumped face mass weighted by ``F(|m_prev|)``, ``B`` the
divergence integrated over cells, ``M`` the cell volumes and
``C = (eps_rho + c_mass * phi) M``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import eval_F
from .errors import LinearSolveError
from .grid import CellField, FaceField, face_flux_magnitude


@dataclass(frozen=True)
class LinearSolveConfig:
    lin_tol: float = 1e-12
    max_lin_iter: int = 5

    def __post_init__(self):
        if not 0 < self.lin_tol <= 1e-2:
            raise ValueError("lin_tol must lie in (0, 1e-2]")
        if self.max_lin_iter < 1:
            raise ValueError("max_lin_iter must be positive")


@dataclass(frozen=True)
class SaddleSystem:
    grid: object
    face_block: sp.csr_matrix
    div_block: sp.csr_matrix
    cell_block: np.ndarray
    rhs_face: np.ndarray
    rhs_cell: np.ndarray
    weights: np.ndarray
    eps: float = 0.0
    full: sp.csc_matrix | None = None

    def matrix(self):
        if self.full is not None:
            return self.full
        B = self.div_block
        return sp.bmat(
            [[self.face_block, -B.T], [B, sp.diags(self.cell_block)]], format="csc"
        )

    @property
    def rhs(self):
        return np.concatenate([self.rhs_face, self.rhs_cell])

    def block_residuals(self, m_vec, rho_vec):
        """Face and cell residual vectors plus the block-relative residual norm.

        Each block is scaled componentwise by ``|K| |x| + |b|`` so that
        cancelling terms do not inflate the relative residual, and zero data
        gives zero rather than 0/0.
        """
        B = self.div_block
        absB = abs(B)
        r_face = self.face_block @ m_vec - B.T @ rho_vec - self.rhs_face
        r_cell = B @ m_vec + self.cell_block * rho_vec - self.rhs_cell
        am, arho = np.abs(m_vec), np.abs(rho_vec)
        scale_f = abs(self.face_block) @ am + absB.T @ arho + np.abs(self.rhs_face)
        scale_c = absB @ am + np.abs(self.cell_block) * arho + np.abs(self.rhs_cell)
        rel = max(_ratio(np.linalg.norm(r_face), np.linalg.norm(scale_f)),
                  _ratio(np.linalg.norm(r_cell), np.linalg.norm(scale_c)))
        return r_face, r_cell, rel


def _ratio(num, den):
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return num / den


def assemble_divergence_matrix(grid):
    """Sparse ``B`` with ``B @ m.vector == divergence(m) * cell_volume``."""
    nx, ny = grid.nx, grid.ny
    rows, cols, vals = [], [], []
    # x-face (i, j): east face of cell (i-1, j), west face of cell (i, j)
    i, j = np.meshgrid(np.arange(nx + 1), np.arange(ny), indexing="ij")
    f = (i * ny + j).ravel()
    i, j = i.ravel(), j.ravel()
    left = i > 0
    rows.append((i[left] - 1) * ny + j[left]); cols.append(f[left]); vals.append(np.full(left.sum(), grid.hy))
    right = i < nx
    rows.append(i[right] * ny + j[right]); cols.append(f[right]); vals.append(np.full(right.sum(), -grid.hy))
    # y-face (i, j): north face of cell (i, j-1), south face of cell (i, j)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny + 1), indexing="ij")
    f = (grid.n_xfaces + i * (ny + 1) + j).ravel()
    i, j = i.ravel(), j.ravel()
    below = j > 0
    rows.append(i[below] * ny + j[below] - 1); cols.append(f[below]); vals.append(np.full(below.sum(), grid.hx))
    above = j < ny
    rows.append(i[above] * ny + j[above]); cols.append(f[above]); vals.append(np.full(above.sum(), -grid.hx))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_cells, grid.n_faces),
    )


def face_weights(grid, law, m_prev, t, centers=None):
    """``F(x_f, t, |m_prev|_f)`` at every face midpoint."""
    x = grid.face_centers() if centers is None else centers
    if not law.is_constant:
        law.check_bounds(x, t)
    mag = face_flux_magnitude(grid, m_prev)
    return np.asarray(eval_F(law, x, t, mag), dtype=float) * np.ones(grid.n_faces)


def assemble_weighted_face_mass(grid, law, m_prev, t):
    """Diagonal lumped mass with entries ``F(|m_prev|) * face_volume``."""
    return sp.diags(face_weights(grid, law, m_prev, t) * grid.face_volumes(), format="csr")


class SaddleAssembler:
    """Builds ``SaddleSystem`` instances for a fixed problem and varying ``m_prev``.

    Everything except the face weights is assembled once; each call only
    overwrites the diagonal entries of the face block.
    """

    def __init__(self, grid, law, t, eps, eps_rho, c_mass, phi, f_bar, rho_b,
                 div_matrix=None):
        if eps < 0 or eps_rho < 0 or c_mass < 0:
            raise ValueError("eps, eps_rho and c_mass must be non-negative")
        for name, field in (("f_bar", f_bar), ("rho_b", rho_b)):
            if field.grid != grid:
                raise ValueError(f"{name} lives on a different grid")
        if c_mass > 0:
            if phi is None or phi.grid != grid:
                raise ValueError("transient assembly needs a porosity field on this grid")
            phi_vals = phi.vector
        else:
            phi_vals = 0.0
        self.grid, self.law, self.t, self.eps = grid, law, t, float(eps)
        B = div_matrix if div_matrix is not None else assemble_divergence_matrix(grid)
        self.B = B
        nf = grid.n_faces
        self.volumes = grid.face_volumes()
        self.centers = grid.face_centers()
        self.cell_block = (eps_rho + c_mass * phi_vals) * grid.cell_volume * np.ones(grid.n_cells)

        idx, sign, area = grid.boundary_faces()
        self.rhs_face = np.zeros(nf)
        self.rhs_face[idx] = -rho_b.vector * sign * area
        self.rhs_cell = f_bar.vector * grid.cell_volume

        # unit placeholder keeps every face diagonal entry structurally present
        eye = sp.identity(nf, format="csr")
        face0 = (eps * (B.T @ B) / grid.cell_volume + eye).tocsr() if eps > 0 else eye.copy()
        face0.sort_indices()
        self._face0 = face0
        self._face_pos = _diagonal_positions(face0, nf, column_major=False)
        self._face_base = face0.data[self._face_pos] - 1.0
        K0 = sp.bmat([[face0, -B.T], [B, sp.diags(self.cell_block)]], format="csc")
        K0.sort_indices()
        self._K0 = K0
        self._K_pos = _diagonal_positions(K0, nf, column_major=True)

    def assemble(self, m_prev):
        if m_prev.grid != self.grid:
            raise ValueError("m_prev lives on a different grid")
        w = face_weights(self.grid, self.law, m_prev, self.t, self.centers)
        diag = self._face_base + w * self.volumes
        fdata = self._face0.data.copy()
        fdata[self._face_pos] = diag
        face_block = sp.csr_matrix((fdata, self._face0.indices, self._face0.indptr),
                                   shape=self._face0.shape)
        kdata = self._K0.data.copy()
        kdata[self._K_pos] = diag
        full = sp.csc_matrix((kdata, self._K0.indices, self._K0.indptr), shape=self._K0.shape)
        return SaddleSystem(self.grid, face_block, self.B, self.cell_block, self.rhs_face,
                            self.rhs_cell, w, self.eps, full)


def _diagonal_positions(mat, n, column_major):
    """Indices into ``mat.data`` of the diagonal entries ``(k, k)`` for ``k < n``."""
    major = np.repeat(np.arange(mat.shape[1] if column_major else mat.shape[0]),
                      np.diff(mat.indptr))
    hit = np.nonzero((mat.indices == major) & (major < n))[0]
    if hit.size != n:
        raise RuntimeError("diagonal pattern incomplete")
    return hit[np.argsort(major[hit])]


def assemble_system(grid, law, m_prev, t, eps, eps_rho, c_mass, phi, f_bar, rho_b,
                    div_matrix=None):
    """Assemble the regularized mixed system with weights frozen at ``m_prev``.

    Stationary problems use ``eps_rho = eps, c_mass = 0``; an implicit Euler
    step uses ``eps_rho = 0, c_mass = 1/dt`` with ``f_bar`` already holding
    ``f + phi * rho_prev / dt``.
    """
    return SaddleAssembler(grid, law, t, eps, eps_rho, c_mass, phi, f_bar, rho_b,
                           div_matrix).assemble(m_prev)


def solve_saddle(system, config=None):
    """Sparse LU solve with iterative refinement.

    The reported residual is the normwise backward error
    ``|Kx - b| / (| |K||x| | + |b|)``, which must not exceed ``lin_tol``.
    """
    config = config or LinearSolveConfig()
    K = system.matrix()
    b = system.rhs
    nb = np.linalg.norm(b)
    nf = system.grid.n_faces
    if nb == 0.0:
        x = np.zeros_like(b)
        return FaceField.from_vector(system.grid, x[:nf]), CellField(system.grid, x[nf:]), 0.0
    lu = spla.splu(K)
    absK = abs(K)

    def backward_error(x):
        return np.linalg.norm(K @ x - b) / np.linalg.norm(absK @ np.abs(x) + np.abs(b))

    x = lu.solve(b)
    res = backward_error(x)
    for _ in range(config.max_lin_iter - 1):
        if res <= config.lin_tol:
            break
        x = x + lu.solve(b - K @ x)
        res = backward_error(x)
    if not np.isfinite(res) or res > config.lin_tol:
        raise LinearSolveError(f"saddle solve residual {res:.3e} above {config.lin_tol:.1e}", res)
    return FaceField.from_vector(system.grid, x[:nf]), CellField(system.grid, x[nf:]), float(res)


def schur_complement(system):
    """``B W^-1 B^T + C`` for a system with a diagonal face block (eps = 0)."""
    A = system.face_block
    if A.nnz != A.shape[0] or (A - sp.diags(A.diagonal())).count_nonzero():
        raise ValueError("Schur complement needs a diagonal face block (eps = 0)")
    B = system.div_block
    return (B @ sp.diags(1.0 / A.diagonal()) @ B.T + sp.diags(system.cell_block)).tocsr()


def dump_matrix(system, path):
    """Write the saddle matrix as ``row col value`` lines."""
    K = system.matrix().tocoo()
    order = np.lexsort((K.col, K.row))
    with open(path, "w") as fh:
        for r, c, v in zip(K.row[order], K.col[order], K.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
    return path
