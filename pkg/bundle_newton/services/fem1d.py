"""1-D finite element layer: element assembly and direct solvers.

Element kernels are evaluated for all intervals at once and hand back an
:class:`ElementContributions` bundle (global dof indices, local residuals,
local matrices). :func:`assemble` scatters them into a
:class:`BlockTriDiag` or :class:`BandedMatrix`; a negative dof index marks
an eliminated (Dirichlet) test or trial function.

Solvers come as factorization objects with a ``solve(rhs)`` method so the
damped Newton loop can reuse one factorization for several right-hand
sides.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from bundle_newton.errors import DimensionMismatch, SingularSystem
from config.settings import SINGULAR_CONDITION

logger = logging.getLogger(__name__)


def fd_slope(a, b, h):
    """Slope (b - a) / h of the linear interpolant on one interval."""
    return (np.asarray(b, dtype=float) - np.asarray(a, dtype=float)) / h


def trapezoid_accumulate(f_left, f_right, h):
    """Trapezoidal rule h * (f_i + f_{i+1}) / 2 per interval."""
    return h * (np.asarray(f_left, dtype=float) + np.asarray(f_right, dtype=float)) / 2.0


@dataclass(frozen=True, eq=False)
class BlockTriDiag:
    """Block tridiagonal matrix; ``lower[i]`` is block (i+1, i), ``upper[i]`` is (i, i+1)."""

    diagonal: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        n, m, m2 = self.diagonal.shape
        if m != m2:
            raise DimensionMismatch("diagonal blocks must be square")
        expected = (max(n - 1, 0), m, m)
        if self.lower.shape != expected or self.upper.shape != expected:
            raise DimensionMismatch(f"off-diagonal blocks must have shape {expected}")

    @property
    def n_blocks(self) -> int:
        return self.diagonal.shape[0]

    @property
    def block_dim(self) -> int:
        return self.diagonal.shape[1]

    @property
    def dim(self) -> int:
        return self.n_blocks * self.block_dim

    @classmethod
    def from_entries(cls, rows, cols, values, dim, block_dim):
        if dim % block_dim:
            raise DimensionMismatch(f"dimension {dim} is not a multiple of block size {block_dim}")
        n = dim // block_dim
        bi, r = np.divmod(rows, block_dim)
        bj, c = np.divmod(cols, block_dim)
        if np.any(np.abs(bi - bj) > 1):
            raise DimensionMismatch("entry outside the block tridiagonal pattern")
        diagonal = np.zeros((n, block_dim, block_dim))
        lower = np.zeros((max(n - 1, 0), block_dim, block_dim))
        upper = np.zeros_like(lower)
        on = bi == bj
        below = bi == bj + 1
        above = bj == bi + 1
        np.add.at(diagonal, (bi[on], r[on], c[on]), values[on])
        np.add.at(lower, (bj[below], r[below], c[below]), values[below])
        np.add.at(upper, (bi[above], r[above], c[above]), values[above])
        return cls(diagonal, lower, upper)

    def to_dense(self) -> np.ndarray:
        n, m = self.n_blocks, self.block_dim
        dense = np.zeros((n * m, n * m))
        for i in range(n):
            dense[i * m:(i + 1) * m, i * m:(i + 1) * m] = self.diagonal[i]
            if i + 1 < n:
                dense[(i + 1) * m:(i + 2) * m, i * m:(i + 1) * m] = self.lower[i]
                dense[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] = self.upper[i]
        return dense

    def matvec(self, x) -> np.ndarray:
        xb = np.asarray(x, dtype=float).reshape(self.n_blocks, self.block_dim)
        out = np.einsum('nij,nj->ni', self.diagonal, xb)
        if self.n_blocks > 1:
            out[1:] += np.einsum('nij,nj->ni', self.lower, xb[:-1])
            out[:-1] += np.einsum('nij,nj->ni', self.upper, xb[1:])
        return out.ravel()

    def scaled(self, s) -> 'BlockTriDiag':
        return BlockTriDiag(s * self.diagonal, s * self.lower, s * self.upper)


@dataclass(frozen=True, eq=False)
class BandedMatrix:
    """General band matrix in LAPACK layout: ``bands[upper_bw + i - j, j] = A[i, j]``."""

    dim: int
    lower_bw: int
    upper_bw: int
    bands: np.ndarray

    def __post_init__(self):
        if self.bands.shape != (self.lower_bw + self.upper_bw + 1, self.dim):
            raise DimensionMismatch(
                f"band storage must have shape {(self.lower_bw + self.upper_bw + 1, self.dim)}"
            )

    @classmethod
    def from_entries(cls, rows, cols, values, dim, lower_bw=None, upper_bw=None):
        offset = rows - cols
        lower_bw = int(max(offset.max(initial=0), 0)) if lower_bw is None else lower_bw
        upper_bw = int(max((-offset).max(initial=0), 0)) if upper_bw is None else upper_bw
        if np.any(offset > lower_bw) or np.any(-offset > upper_bw):
            raise DimensionMismatch("entry outside the declared band")
        bands = np.zeros((lower_bw + upper_bw + 1, dim))
        np.add.at(bands, (upper_bw + rows - cols, cols), values)
        return cls(dim, lower_bw, upper_bw, bands)

    @classmethod
    def from_dense(cls, dense, lower_bw, upper_bw):
        dense = np.asarray(dense, dtype=float)
        rows, cols = np.nonzero(dense)
        return cls.from_entries(rows, cols, dense[rows, cols], dense.shape[0], lower_bw, upper_bw)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.dim, self.dim))
        for k in range(-self.upper_bw, self.lower_bw + 1):
            j = np.arange(max(0, -k), min(self.dim, self.dim - k))
            dense[j + k, j] = self.bands[self.upper_bw + k, j]
        return dense

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.dim)
        for k in range(-self.upper_bw, self.lower_bw + 1):
            j = np.arange(max(0, -k), min(self.dim, self.dim - k))
            out[j + k] += self.bands[self.upper_bw + k, j] * x[j]
        return out

    def scaled(self, s) -> 'BandedMatrix':
        return BandedMatrix(self.dim, self.lower_bw, self.upper_bw, s * self.bands)


@dataclass(frozen=True, eq=False)
class ElementContributions:
    """Local residuals/matrices of all elements at once.

    Shapes: ``dofs`` (n_el, k) int with -1 for eliminated dofs,
    ``residual`` (n_el, k), ``jacobian`` (n_el, k, k) with rows = test and
    columns = trial functions.
    """

    dofs: np.ndarray
    residual: np.ndarray
    jacobian: Optional[np.ndarray] = None


def assemble(contrib: ElementContributions, dof_count: int, block_dim: Optional[int] = None):
    """Scatter element contributions into the global system.

    Returns:
        (A, b) where A is a BlockTriDiag if ``block_dim`` is given, a
        BandedMatrix otherwise, and None when no local matrices were supplied.
    """
    dofs = np.asarray(contrib.dofs)
    if contrib.residual.shape != dofs.shape:
        raise DimensionMismatch(
            f"residual shape {contrib.residual.shape} does not match dofs {dofs.shape}"
        )
    if dofs.max(initial=-1) >= dof_count:
        raise DimensionMismatch(f"dof index {dofs.max()} exceeds dof count {dof_count}")

    keep = dofs >= 0
    b = np.zeros(dof_count)
    np.add.at(b, dofs[keep], contrib.residual[keep])
    if contrib.jacobian is None:
        return None, b

    jac = contrib.jacobian
    if jac.shape != dofs.shape + dofs.shape[-1:]:
        raise DimensionMismatch(f"jacobian shape {jac.shape} does not match dofs {dofs.shape}")
    rows = np.broadcast_to(dofs[:, :, None], jac.shape)
    cols = np.broadcast_to(dofs[:, None, :], jac.shape)
    mask = (rows >= 0) & (cols >= 0)
    if block_dim is not None:
        matrix = BlockTriDiag.from_entries(rows[mask], cols[mask], jac[mask], dof_count, block_dim)
    else:
        matrix = BandedMatrix.from_entries(rows[mask], cols[mask], jac[mask], dof_count)
    return matrix, b


class DenseLU:
    """LU factorization with partial pivoting of a dense matrix."""

    def __init__(self, matrix):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatch(f"Newton matrix must be square, got {matrix.shape}")
        self.dim = matrix.shape[0]
        self.lu, self.piv = scipy.linalg.lu_factor(matrix, check_finite=True)
        _check_pivots(np.diag(self.lu), 'dense LU')

    def solve(self, rhs):
        return scipy.linalg.lu_solve((self.lu, self.piv), np.asarray(rhs, dtype=float))


class BlockThomasLU:
    """Block Thomas factorization; pivoting happens only inside the diagonal blocks."""

    def __init__(self, matrix: BlockTriDiag):
        self.matrix = matrix
        self.dim = matrix.dim
        n = matrix.n_blocks
        self.pivots = []
        self.coupling = np.zeros_like(matrix.upper)
        pivot_block = matrix.diagonal[0]
        for i in range(n):
            if i > 0:
                pivot_block = matrix.diagonal[i] - matrix.lower[i - 1] @ self.coupling[i - 1]
            if np.linalg.cond(pivot_block) > SINGULAR_CONDITION:
                raise SingularSystem(f"near-singular pivot block {i} in block Thomas sweep")
            factor = scipy.linalg.lu_factor(pivot_block)
            self.pivots.append(factor)
            if i + 1 < n:
                self.coupling[i] = scipy.linalg.lu_solve(factor, matrix.upper[i])

    def solve(self, rhs):
        n, m = self.matrix.n_blocks, self.matrix.block_dim
        g = np.asarray(rhs, dtype=float).reshape(n, m)
        z = np.empty((n, m))
        z[0] = scipy.linalg.lu_solve(self.pivots[0], g[0])
        for i in range(1, n):
            z[i] = scipy.linalg.lu_solve(self.pivots[i], g[i] - self.matrix.lower[i - 1] @ z[i - 1])
        x = z
        for i in range(n - 2, -1, -1):
            x[i] = z[i] - self.coupling[i] @ x[i + 1]
        return x.ravel()


class BandedLU:
    """LAPACK gbtrf/gbtrs factorization with partial pivoting inside the band.

    Row interchanges can push fill-in up to ``lower_bw`` extra superdiagonals,
    so the working storage carries that many additional rows.
    """

    def __init__(self, matrix: BandedMatrix):
        self.dim = matrix.dim
        self.kl, self.ku = matrix.lower_bw, matrix.upper_bw
        work = np.zeros((2 * self.kl + self.ku + 1, self.dim))
        work[self.kl:, :] = matrix.bands
        self.lu, self.piv, info = lapack.dgbtrf(work, self.kl, self.ku)
        if info < 0:
            raise ValueError(f"dgbtrf: illegal argument {-info}")
        if info > 0:
            raise SingularSystem(f"zero pivot at row {info} of the banded system")
        _check_pivots(self.lu[self.kl + self.ku, :], 'banded LU')

    def solve(self, rhs):
        x, info = lapack.dgbtrs(self.lu, self.kl, self.ku, np.asarray(rhs, dtype=float), self.piv)
        if info != 0:
            raise ValueError(f"dgbtrs: illegal argument {-info}")
        return x


def _check_pivots(pivots, label):
    magnitudes = np.abs(pivots)
    scale = magnitudes.max(initial=0.0)
    if scale == 0.0 or magnitudes.min() <= scale / SINGULAR_CONDITION:
        raise SingularSystem(f"near-zero pivot in {label} (max {scale:.3e}, min {magnitudes.min():.3e})")


@functools.singledispatch
def factorize(matrix):
    """Factorization object with ``solve(rhs)`` for any supported matrix type."""
    return DenseLU(matrix)


@factorize.register
def _(matrix: BlockTriDiag):
    return BlockThomasLU(matrix)


@factorize.register
def _(matrix: BandedMatrix):
    return BandedLU(matrix)


def solve_block_tridiagonal(matrix: BlockTriDiag, b) -> np.ndarray:
    """Solve A xi + b = 0."""
    return BlockThomasLU(matrix).solve(-np.asarray(b, dtype=float))


def solve_banded(matrix: BandedMatrix, b) -> np.ndarray:
    """Solve A xi + b = 0."""
    return BandedLU(matrix).solve(-np.asarray(b, dtype=float))
