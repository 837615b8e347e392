"""Elastic geodesics on S^2, optionally in a (non-conservative) force field.

The residual is F(gamma)phi = int <gamma', phi'> + omega(gamma) phi dt with
P1 curves, trapezoidal quadrature, and the per-node tangent bases of
:func:`tangent_bases` as test/trial functions. Its Newton matrix adds the
dual connection of the projection transport to the Euclidean derivative:
F(gamma)(P'(gamma) dgamma phi) + F'_{R^3}(gamma) dgamma phi.
"""

from __future__ import annotations

import logging

import numpy as np

from bundle_newton.errors import ConfigError, DimensionMismatch
from bundle_newton.models import Grid, NodalCurve, UnitVec3
from bundle_newton.services.fem1d import ElementContributions, assemble, fd_slope, trapezoid_accumulate
from bundle_newton.services.geometry import (
    connection_matrices,
    retract_sphere,
    tangent_bases,
    transport_frames,
)
from bundle_newton.services.newton import NewtonProblem, norm_inf_nodal
from bundle_newton.services.problems.forces import ForceField, WindingForce
from config.settings import FORCE_SCALE, TANGENT_TOL

logger = logging.getLogger(__name__)


def _as_unit(point) -> UnitVec3:
    return point if isinstance(point, UnitVec3) else UnitVec3(point)


def connecting_geodesic(grid: Grid, gamma0, gamma_t) -> NodalCurve:
    """Great-circle arc from gamma0 to gamma_t sampled at constant speed on the grid."""
    a, b = _as_unit(gamma0).coords, _as_unit(gamma_t).coords
    angle = float(np.arccos(np.clip(a @ b, -1.0, 1.0)))
    s = grid.nodes / grid.t_end
    if angle < 1e-14:
        points = np.tile(a, (grid.n_nodes, 1))
    else:
        points = (np.sin((1.0 - s) * angle)[:, None] * a + np.sin(s * angle)[:, None] * b) / np.sin(angle)
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    points[0], points[-1] = a, b
    return NodalCurve(grid, points)


class SphereCurveProblem(NewtonProblem):
    """Shared machinery of the curve problems on S^2 with Dirichlet ends.

    Subclasses provide the element covectors of F (``_element_covectors``)
    and the Euclidean nodal second-derivative terms (``_element_hessians``);
    stiffness, connection terms, bases, retraction and norm live here.
    """

    block_dim = 2

    def __init__(self, grid: Grid, gamma0, gamma_t):
        self.grid = grid
        self.gamma0 = _as_unit(gamma0)
        self.gamma_t = _as_unit(gamma_t)
        if self.gamma0.coords @ self.gamma_t.coords <= -1.0 + 1e-12:
            raise ConfigError("boundary points must not be antipodal")
        # Global dof of basis vector j at node k, -1 on the boundary
        n, m = grid.n_nodes, self.block_dim
        node_dofs = np.full((n, m), -1, dtype=int)
        node_dofs[1:-1] = np.arange(grid.n_interior * m).reshape(grid.n_interior, m)
        self._element_dofs = np.concatenate([node_dofs[:-1], node_dofs[1:]], axis=1)

    @property
    def dof_count(self) -> int:
        return self.grid.n_interior * self.block_dim

    def initial_curve(self) -> NodalCurve:
        return connecting_geodesic(self.grid, self.gamma0, self.gamma_t)

    def check_state(self, curve: NodalCurve):
        if curve.grid != self.grid:
            raise DimensionMismatch("curve lives on a different grid")
        if not (np.array_equal(curve.points[0], self.gamma0.coords)
                and np.array_equal(curve.points[-1], self.gamma_t.coords)):
            raise DimensionMismatch("curve end points differ from the boundary data")

    # Element kernels

    def _element_covectors(self, points) -> np.ndarray:
        """Covectors G[e, end] with F(gamma)phi = sum <G[e, end], phi(node)>, shape (n_el, 2, 3)."""
        h = self.grid.h
        slope = fd_slope(points[:-1], points[1:], h)
        return np.stack([-slope, slope], axis=1)

    def _element_hessians(self, points) -> np.ndarray:
        """Euclidean nodal terms, test^T H[e, end] trial, shape (n_el, 2, 3, 3)."""
        return np.zeros((len(points) - 1, 2, 3, 3))

    def _residual_contributions(self, points, tests) -> ElementContributions:
        cov = self._element_covectors(points)
        frames = np.stack([tests[:-1], tests[1:]], axis=1)
        local = np.einsum('eai,eaij->eaj', cov, frames).reshape(len(cov), -1)
        return ElementContributions(self._element_dofs, local)

    def _jacobian_contributions(self, points, bases) -> ElementContributions:
        h, m = self.grid.h, self.block_dim
        n_el = len(points) - 1
        cov = self._element_covectors(points)
        frames = np.stack([bases[:-1], bases[1:]], axis=1)
        ends = np.stack([points[:-1], points[1:]], axis=1)

        # Stiffness h <dphi2/dt, dphi1/dt>
        slopes = np.stack([-bases[:-1], bases[1:]], axis=1) / h
        stiffness = h * np.einsum('eaim,ebin->eambn', slopes, slopes)

        # Nodal terms: Euclidean second derivative plus F(gamma)(P' dgamma phi)
        nodal = self._element_hessians(points) + connection_matrices(
            ends.reshape(-1, 3), cov.reshape(-1, 3)
        ).reshape(n_el, 2, 3, 3)
        nodal_local = np.einsum('eaim,eaij,eajn->eamn', frames, nodal, frames)
        stiffness[:, 0, :, 0, :] += nodal_local[:, 0]
        stiffness[:, 1, :, 1, :] += nodal_local[:, 1]

        local_b = np.einsum('eai,eaij->eaj', cov, frames).reshape(n_el, 2 * m)
        return ElementContributions(self._element_dofs, local_b, stiffness.reshape(n_el, 2 * m, 2 * m))

    # NewtonProblem

    def assemble_residual(self, state: NodalCurve) -> np.ndarray:
        points = state.points
        _, b = assemble(self._residual_contributions(points, tangent_bases(points)), self.dof_count)
        return b

    def assemble_transported_residual(self, state_old: NodalCurve, state_new: NodalCurve) -> np.ndarray:
        tests = transport_frames(state_new.points, tangent_bases(state_old.points))
        _, b = assemble(self._residual_contributions(state_new.points, tests), self.dof_count)
        return b

    def assemble_jacobian(self, state: NodalCurve):
        return self.assemble_system(state)[0]

    def assemble_system(self, state: NodalCurve):
        points = state.points
        contrib = self._jacobian_contributions(points, tangent_bases(points))
        return assemble(contrib, self.dof_count, block_dim=self.block_dim)

    def tangent_vectors(self, state: NodalCurve, xi) -> np.ndarray:
        """Nodal tangent vectors represented by xi, shape (N, 3)."""
        bases = tangent_bases(state.interior)
        coeffs = np.asarray(xi, dtype=float).reshape(self.grid.n_interior, self.block_dim)
        return np.einsum('nij,nj->ni', bases, coeffs)

    def retract(self, state: NodalCurve, xi, alpha) -> NodalCurve:
        points = np.array(state.points)
        points[1:-1] = retract_sphere(state.interior, alpha * self.tangent_vectors(state, xi))
        return NodalCurve(self.grid, points)

    def norm_inf(self, state: NodalCurve, xi) -> float:
        return norm_inf_nodal(xi, tangent_bases(state.interior))

    def dirichlet_energy(self, state: NodalCurve) -> float:
        """1/2 int |gamma'|^2 dt, exact for P1 curves."""
        speed2 = np.sum(fd_slope(state.points[:-1], state.points[1:], self.grid.h) ** 2, axis=1)
        return 0.5 * float(np.sum(trapezoid_accumulate(speed2, speed2, self.grid.h)))


class GeodesicForceProblem(SphereCurveProblem):
    """Elastic geodesic in a force field (winding field by default)."""

    def __init__(self, grid: Grid, gamma0, gamma_t, force_scale=FORCE_SCALE, force: ForceField = None):
        super().__init__(grid, gamma0, gamma_t)
        self.force_scale = force_scale
        self.force = force if force is not None else WindingForce(force_scale)

    def _element_covectors(self, points):
        cov = super()._element_covectors(points)
        if self.force.is_zero:
            return cov
        w = self.force.value(points)
        cov[:, 0] += 0.5 * self.grid.h * w[:-1]
        cov[:, 1] += 0.5 * self.grid.h * w[1:]
        return cov

    def _element_hessians(self, points):
        hess = super()._element_hessians(points)
        if self.force.is_zero:
            return hess
        jac = self.force.jacobian(points)
        hess[:, 0] += 0.5 * self.grid.h * jac[:-1]
        hess[:, 1] += 0.5 * self.grid.h * jac[1:]
        return hess


def _problem_for(curve: NodalCurve, force_scale):
    return GeodesicForceProblem(curve.grid, curve.points[0], curve.points[-1], force_scale=force_scale)


def geodesic_residual(curve: NodalCurve, force_scale=FORCE_SCALE) -> np.ndarray:
    """Residual coefficients of the elastic geodesic problem fixed by the curve's end points."""
    return _problem_for(curve, force_scale).assemble_residual(curve)


def geodesic_jacobian(curve: NodalCurve, force_scale=FORCE_SCALE):
    """Block tridiagonal Newton matrix of the elastic geodesic problem."""
    return _problem_for(curve, force_scale).assemble_jacobian(curve)


def is_tangent_field(curve: NodalCurve, vectors) -> bool:
    """True if every nodal vector is tangent to the curve point it is attached to."""
    return bool(np.all(np.abs(np.sum(curve.interior * vectors, axis=1)) <= TANGENT_TOL))
