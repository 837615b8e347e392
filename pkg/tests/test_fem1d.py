import numpy as np
import pytest
from hypothesis import given, strategies as st

from bundle_newton.errors import ConfigError, DimensionMismatch, SingularSystem
from bundle_newton.models import Grid, NodalCurve
from bundle_newton.services.fem1d import (
    BandedLU,
    BandedMatrix,
    BlockThomasLU,
    BlockTriDiag,
    DenseLU,
    ElementContributions,
    assemble,
    factorize,
    fd_slope,
    solve_banded,
    solve_block_tridiagonal,
    trapezoid_accumulate,
)


def _random_block_tridiag(rng, n, m):
    diagonal = rng.normal(size=(n, m, m)) + 4.0 * m * np.eye(m)
    lower = rng.normal(size=(n - 1, m, m))
    upper = rng.normal(size=(n - 1, m, m))
    return BlockTriDiag(diagonal, lower, upper)


def _random_banded(rng, dim, kl, ku):
    dense = np.zeros((dim, dim))
    for k in range(-ku, kl + 1):
        idx = np.arange(max(0, -k), min(dim, dim - k))
        dense[idx + k, idx] = rng.normal(size=len(idx))
    dense += (kl + ku + 2) * np.eye(dim)
    return BandedMatrix.from_dense(dense, kl, ku), dense


# Grid

def test_grid_nodes():
    grid = Grid(2.0, 3)
    assert grid.h == 0.5
    assert grid.n_nodes == 5 and grid.n_intervals == 4
    np.testing.assert_allclose(grid.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])
    assert grid.nodes[-1] == 2.0


def test_grid_rejects_empty():
    with pytest.raises(ConfigError):
        Grid(1.0, 0)


def test_curve_rejects_off_sphere_points():
    grid = Grid(1.0, 1)
    with pytest.raises(ValueError):
        NodalCurve(grid, [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])


# fd_slope / trapezoid

def test_fd_slope_examples():
    y = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(fd_slope(y, y, 0.1), np.zeros(3))
    np.testing.assert_array_equal(fd_slope(np.zeros(3), [0.25, 0.0, 0.0], 0.25), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(fd_slope([1.0, 2.0, 3.0], [3.0, 2.0, 1.0], 0.5), [4.0, 0.0, -4.0])


@given(st.floats(-1e3, 1e3), st.floats(1e-3, 10.0))
def test_trapezoid_constant(c, h):
    assert trapezoid_accumulate(c, c, h) == pytest.approx(h * c, rel=1e-15, abs=1e-300)


def test_trapezoid_exact_on_affine():
    assert trapezoid_accumulate(0.0, 1.0, 1.0) == 0.5


def test_trapezoid_second_order():
    def error(n):
        t = np.linspace(0.0, 1.0, n + 1)
        f = t ** 2
        return abs(np.sum(trapezoid_accumulate(f[:-1], f[1:], 1.0 / n)) - 1.0 / 3.0)

    ratios = [error(n) / error(2 * n) for n in (8, 16, 32)]
    for ratio in ratios:
        assert ratio == pytest.approx(4.0, rel=1e-6)


# Matrix containers

def test_block_tridiag_matvec_matches_dense(rng):
    matrix = _random_block_tridiag(rng, 6, 3)
    x = rng.normal(size=18)
    np.testing.assert_allclose(matrix.matvec(x), matrix.to_dense() @ x, rtol=1e-13)


def test_block_tridiag_shape_check():
    with pytest.raises(DimensionMismatch):
        BlockTriDiag(np.zeros((3, 2, 2)), np.zeros((3, 2, 2)), np.zeros((2, 2, 2)))


def test_block_tridiag_rejects_entries_outside_pattern():
    with pytest.raises(DimensionMismatch):
        BlockTriDiag.from_entries(np.array([0]), np.array([4]), np.array([1.0]), 6, 2)


def test_banded_roundtrip_and_matvec(rng):
    matrix, dense = _random_banded(rng, 30, 2, 3)
    np.testing.assert_array_equal(matrix.to_dense(), dense)
    x = rng.normal(size=30)
    np.testing.assert_allclose(matrix.matvec(x), dense @ x, rtol=1e-13)


def test_banded_rejects_entries_outside_band():
    with pytest.raises(DimensionMismatch):
        BandedMatrix.from_entries(np.array([5]), np.array([0]), np.array([1.0]), 6, 1, 1)


# Assembly

def test_assemble_eliminates_boundary_dofs():
    dofs = np.array([[-1, 0], [0, 1], [1, -1]])
    residual = np.array([[9.0, 1.0], [2.0, 3.0], [4.0, 9.0]])
    local = np.array([[[9.0, 9.0], [9.0, 1.0]], [[2.0, -1.0], [-1.0, 2.0]], [[1.0, 9.0], [9.0, 9.0]]])
    matrix, b = assemble(ElementContributions(dofs, residual, local), 2, block_dim=1)
    np.testing.assert_array_equal(b, [3.0, 7.0])
    np.testing.assert_array_equal(matrix.to_dense(), [[3.0, -1.0], [-1.0, 3.0]])


def test_assemble_banded_by_default():
    dofs = np.array([[0, 1], [1, 2]])
    local = np.broadcast_to(np.array([[1.0, -1.0], [-1.0, 1.0]]), (2, 2, 2)).copy()
    matrix, b = assemble(ElementContributions(dofs, np.zeros((2, 2)), local), 3)
    assert isinstance(matrix, BandedMatrix)
    assert (matrix.lower_bw, matrix.upper_bw) == (1, 1)
    np.testing.assert_array_equal(matrix.to_dense(), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def test_assemble_residual_only():
    matrix, b = assemble(ElementContributions(np.array([[0, 1]]), np.array([[1.0, 2.0]])), 2)
    assert matrix is None
    np.testing.assert_array_equal(b, [1.0, 2.0])


def test_assemble_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        assemble(ElementContributions(np.array([[0, 1]]), np.array([[1.0, 2.0, 3.0]])), 2)
    with pytest.raises(DimensionMismatch):
        assemble(ElementContributions(np.array([[0, 5]]), np.array([[1.0, 2.0]])), 2)


# Solvers

def test_block_thomas_identity_blocks(rng):
    n, m = 5, 2
    matrix = BlockTriDiag(np.tile(np.eye(m), (n, 1, 1)), np.zeros((n - 1, m, m)), np.zeros((n - 1, m, m)))
    b = rng.normal(size=n * m)
    np.testing.assert_array_equal(solve_block_tridiagonal(matrix, b), -b)


@pytest.mark.parametrize('m', [2, 3])
def test_block_thomas_matches_dense(rng, m):
    for _ in range(100):
        n = int(rng.integers(1, 21))
        matrix = _random_block_tridiag(rng, n, m)
        b = rng.normal(size=n * m)
        xi = solve_block_tridiagonal(matrix, b)
        expected = np.linalg.solve(matrix.to_dense(), -b)
        assert np.max(np.abs(xi - expected)) <= 1e-10 * max(1.0, np.max(np.abs(expected)))
        assert np.max(np.abs(matrix.matvec(xi) + b)) <= 1e-10 * (1.0 + np.max(np.abs(b)))


def test_block_thomas_zero_rhs(rng):
    matrix = _random_block_tridiag(rng, 4, 2)
    np.testing.assert_array_equal(solve_block_tridiagonal(matrix, np.zeros(8)), np.zeros(8))


def test_block_thomas_singular_pivot():
    n, m = 3, 2
    diagonal = np.tile(np.eye(m), (n, 1, 1))
    diagonal[1] = np.ones((m, m))
    matrix = BlockTriDiag(diagonal, np.zeros((n - 1, m, m)), np.zeros((n - 1, m, m)))
    with pytest.raises(SingularSystem):
        BlockThomasLU(matrix)


def test_banded_diagonal_division():
    matrix = BandedMatrix.from_dense(np.diag([2.0, 4.0, 8.0]), 0, 0)
    np.testing.assert_allclose(solve_banded(matrix, np.array([2.0, 2.0, 2.0])), [-1.0, -0.5, -0.25])


def test_banded_matches_dense(rng):
    for _ in range(100):
        dim = int(rng.integers(5, 201))
        kl, ku = int(rng.integers(0, 5)), int(rng.integers(0, 5))
        matrix, dense = _random_banded(rng, dim, kl, ku)
        b = rng.normal(size=dim)
        xi = solve_banded(matrix, b)
        expected = np.linalg.solve(dense, -b)
        assert np.max(np.abs(xi - expected)) <= 1e-10 * max(1.0, np.max(np.abs(expected)))


def test_banded_saddle_point_toy(rng):
    # Zero diagonal entries of a saddle-point pattern
    dense = np.zeros((8, 8))
    for k in range(0, 8, 2):
        dense[k:k + 2, k:k + 2] = [[1.0, 1.0], [1.0, 0.0]]
    dense[np.arange(1, 7, 2), np.arange(2, 8, 2)] = 0.5
    dense[np.arange(2, 8, 2), np.arange(1, 7, 2)] = 0.5
    b = rng.normal(size=8)
    xi = solve_banded(BandedMatrix.from_dense(dense, 1, 1), b)
    np.testing.assert_allclose(xi, np.linalg.solve(dense, -b), rtol=1e-10, atol=1e-12)


def test_banded_singular():
    with pytest.raises(SingularSystem):
        BandedLU(BandedMatrix.from_dense(np.diag([1.0, 0.0, 1.0]), 1, 1))


def test_factorize_dispatch(rng):
    block = _random_block_tridiag(rng, 3, 2)
    banded, _ = _random_banded(rng, 6, 1, 1)
    assert isinstance(factorize(block), BlockThomasLU)
    assert isinstance(factorize(banded), BandedLU)
    assert isinstance(factorize(np.eye(3)), DenseLU)


def test_factorization_reused_for_many_rhs(rng):
    matrix = _random_block_tridiag(rng, 8, 2)
    factor = factorize(matrix)
    dense = matrix.to_dense()
    for _ in range(5):
        rhs = rng.normal(size=16)
        np.testing.assert_allclose(dense @ factor.solve(rhs), rhs, atol=1e-12)


def test_dense_lu_requires_square():
    with pytest.raises(DimensionMismatch):
        DenseLU(np.ones((2, 3)))
