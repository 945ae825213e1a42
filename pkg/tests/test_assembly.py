import numpy as np
import pytest
import scipy.sparse as sp

from forchheimer.assembly import (
    LinearSolveConfig,
    SaddleAssembler,
    assemble_divergence_matrix,
    assemble_system,
    assemble_weighted_face_mass,
    dump_matrix,
    schur_complement,
    solve_saddle,
)
from forchheimer.constitutive import ForchheimerLaw
from forchheimer.errors import LinearSolveError
from forchheimer.grid import BoundaryTrace, CellField, FaceField, build_grid, divergence

DARCY = ForchheimerLaw.darcy(2.0)
WARD = ForchheimerLaw.ward()


def strip(nx=8, ny=3):
    g = build_grid(nx, ny)
    return g, BoundaryTrace.from_function(g, lambda x, y: 1.0 - x)


def test_divergence_matrix_matches_divergence():
    g = build_grid(5, 4, 2.0, 1.0)
    rng = np.random.default_rng(1)
    m = FaceField.from_vector(g, rng.normal(size=g.n_faces))
    B = assemble_divergence_matrix(g)
    np.testing.assert_allclose(B @ m.vector, divergence(g, m).vector * g.cell_volume, atol=1e-14)
    # interior faces cancel between their two cells, boundary faces do not
    colsum = np.asarray(B.sum(axis=0)).ravel()
    boundary = np.zeros(g.n_faces, bool)
    boundary[g.boundary_faces()[0]] = True
    assert np.all(colsum[~boundary] == 0) and np.all(colsum[boundary] != 0)


def test_darcy_strip_exact_without_regularization():
    g, rb = strip()
    system = assemble_system(g, DARCY, FaceField.zeros(g), 0.0, 0.0, 0.0, 0.0, None,
                             CellField.zeros(g), rb)
    m, rho, res = solve_saddle(system)
    assert res <= 1e-12
    np.testing.assert_allclose(m.x, 0.5, atol=1e-13)
    np.testing.assert_allclose(m.y, 0.0, atol=1e-13)
    np.testing.assert_allclose(rho.values, 1.0 - g.cell_centers()[..., 0], atol=1e-13)


def test_face_block_symmetric_and_weighted():
    g, rb = strip(4, 4)
    m_prev = FaceField.uniform(g, 1.0, 0.0)
    system = assemble_system(g, WARD, m_prev, 0.0, 1e-3, 1e-3, 0.0, None, CellField.zeros(g), rb)
    A = system.face_block
    assert abs(A - A.T).max() < 1e-15
    np.testing.assert_allclose(system.weights, 2.0)
    W = assemble_weighted_face_mass(g, WARD, m_prev, 0.0)
    D = A - 1e-3 * (system.div_block.T @ system.div_block) / g.cell_volume
    np.testing.assert_allclose(D.toarray(), W.toarray(), atol=1e-15)


def test_cached_pattern_matches_block_matrix():
    g, rb = strip(6, 5)
    rng = np.random.default_rng(0)
    asm = SaddleAssembler(g, WARD, 0.0, 1e-2, 0.0, 10.0, CellField.constant(g, 0.7),
                          CellField.zeros(g), rb)
    for _ in range(3):
        system = asm.assemble(FaceField.from_vector(g, rng.normal(size=g.n_faces)))
        B = system.div_block
        ref = sp.bmat([[system.face_block, -B.T], [B, sp.diags(system.cell_block)]])
        assert abs(system.matrix() - ref).max() == 0.0


def test_block_residuals_vanish_at_solution():
    g, rb = strip()
    system = assemble_system(g, WARD, FaceField.zeros(g), 0.0, 1e-4, 1e-4, 0.0, None,
                             CellField.constant(g, 1.0), rb)
    m, rho, _ = solve_saddle(system)
    rf, rc, rel = system.block_residuals(m.vector, rho.vector)
    assert rel < 1e-13
    assert rf.shape == (g.n_faces,) and rc.shape == (g.n_cells,)


def test_zero_data_gives_zero_solution():
    g = build_grid(3, 3)
    system = assemble_system(g, WARD, FaceField.zeros(g), 0.0, 1e-2, 1e-2, 0.0, None,
                             CellField.zeros(g), BoundaryTrace.zeros(g))
    m, rho, res = solve_saddle(system)
    assert res == 0.0 and not m.vector.any() and not rho.vector.any()


def test_schur_complement_solves_reduced_system():
    g, rb = strip(4, 2)
    f = CellField.constant(g, 1.0)
    system = assemble_system(g, DARCY, FaceField.zeros(g), 0.0, 0.0, 1e-3, 0.0, None, f, rb)
    S = schur_complement(system)
    Winv = 1.0 / system.face_block.diagonal()
    rhs = system.rhs_cell - system.div_block @ (Winv * system.rhs_face)
    rho = np.linalg.solve(S.toarray(), rhs)
    _, rho_ref, _ = solve_saddle(system)
    np.testing.assert_allclose(rho, rho_ref.vector, atol=1e-12)
    reg = assemble_system(g, DARCY, FaceField.zeros(g), 0.0, 1e-3, 1e-3, 0.0, None, f, rb)
    with pytest.raises(ValueError):
        schur_complement(reg)


def test_argument_validation():
    g, rb = strip()
    other = build_grid(2, 2)
    with pytest.raises(ValueError):
        assemble_system(g, WARD, FaceField.zeros(g), 0.0, -1.0, 0.0, 0.0, None, CellField.zeros(g), rb)
    with pytest.raises(ValueError):
        assemble_system(g, WARD, FaceField.zeros(g), 0.0, 0.0, 0.0, 1.0, None, CellField.zeros(g), rb)
    with pytest.raises(ValueError):
        assemble_system(g, WARD, FaceField.zeros(other), 0.0, 0.0, 0.0, 0.0, None, CellField.zeros(g), rb)
    with pytest.raises(ValueError):
        LinearSolveConfig(lin_tol=0.5)
    with pytest.raises(ValueError):
        LinearSolveConfig(max_lin_iter=0)


def test_unreachable_tolerance_raises():
    g, rb = strip()
    system = assemble_system(g, WARD, FaceField.zeros(g), 0.0, 1e-2, 1e-2, 0.0, None,
                             CellField.constant(g, 1.0), rb)
    with pytest.raises(LinearSolveError):
        solve_saddle(system, LinearSolveConfig(lin_tol=1e-30, max_lin_iter=1))


def test_dump_matrix(tmp_path):
    g, rb = strip(2, 1)
    system = assemble_system(g, DARCY, FaceField.zeros(g), 0.0, 0.0, 1.0, 0.0, None,
                             CellField.zeros(g), rb)
    path = dump_matrix(system, tmp_path / "K.txt")
    lines = path.read_text().splitlines()
    assert len(lines) == system.matrix().nnz
    r, c, v = lines[0].split()
    assert (int(r), int(c)) == (0, 0)
