import numpy as np
import pytest

from bundle_newton.models import Grid, NodalCurve, RodState
from bundle_newton.services.geometry import tangent_bases
from bundle_newton.services.problems import connecting_geodesic
from config.settings import RANDOM_SEED

FD_STEP = 1e-5


def _fd_jacobian(problem, state, step=FD_STEP):
    """Dense central differences of alpha -> transported residual along each coordinate direction."""
    m = problem.dof_count
    columns = np.empty((m, m))
    for k in range(m):
        xi = np.zeros(m)
        xi[k] = 1.0
        plus = problem.assemble_transported_residual(state, problem.retract(state, xi, step))
        minus = problem.assemble_transported_residual(state, problem.retract(state, xi, -step))
        columns[:, k] = (plus - minus) / (2.0 * step)
    return columns


def _random_curve(grid, gamma0, gamma_t, rng, noise=0.1):
    """Connecting arc plus tangential noise, end points kept exactly."""
    base = connecting_geodesic(grid, gamma0, gamma_t).points
    bases = tangent_bases(base)
    offsets = np.einsum('nij,nj->ni', bases, rng.uniform(-noise, noise, size=(grid.n_nodes, 2)))
    points = base + offsets
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    points[0], points[-1] = base[0], base[-1]
    return NodalCurve(grid, points)


@pytest.fixture
def rng():
    return np.random.default_rng(RANDOM_SEED)


@pytest.fixture
def fd_jacobian():
    return _fd_jacobian


@pytest.fixture
def random_curve():
    return _random_curve


@pytest.fixture
def small_grid():
    return Grid(1.0, 6)


@pytest.fixture
def random_rod_state(rng):
    def make(grid):
        n = grid.n_nodes
        y = rng.normal(size=(n, 3)) * 0.3 + np.array([0.5, 0.4, 0.3])
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        lam = rng.normal(size=(n - 1, 3))
        return RodState(grid, y, v, lam)
    return make


@pytest.fixture
def rel_diff():
    def max_rel_diff(actual, expected):
        actual, expected = np.asarray(actual), np.asarray(expected)
        return np.max(np.abs(actual - expected)) / max(1.0, np.max(np.abs(expected)))
    return max_rel_diff
