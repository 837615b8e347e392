"""Inextensible elastic rod as a Lagrangian saddle point.

Unknowns are P1 positions y in R^3, P1 unit tangents v on S^2 and P0
multipliers lam in (R^3)^* of the constraint y' = v. The equilibrium
conditions tested with phi = (phi_y, phi_v, phi_lam) read

    int omega(y) phi_y + lam(phi_y')              = 0
    int sigma <v', phi_v'> - lam(phi_v)           = 0
    int phi_lam (y' - v)                          = 0

with trapezoidal nodal pairings. Dofs are interleaved per node so the
Newton matrix is banded:

    lam_0 | y_1 v_1 | lam_1 | y_2 v_2 | ... | y_N v_N | lam_N
"""

from __future__ import annotations

import logging

import numpy as np

from bundle_newton.errors import ConfigError, DegenerateUpdate, DimensionMismatch
from bundle_newton.models import Grid, RodState, UnitVec3
from bundle_newton.services.fem1d import ElementContributions, assemble, fd_slope, trapezoid_accumulate
from bundle_newton.services.geometry import (
    connection_matrices,
    retract_sphere,
    tangent_bases,
    transport_frames,
)
from bundle_newton.services.newton import NewtonProblem
from bundle_newton.services.problems.forces import ForceField, ZeroForce
from config.settings import DEGENERATE_NORM, SIGMA

logger = logging.getLogger(__name__)

DOFS_PER_NODE = 8

# Positions inside the 13 local dofs of one interval
YA, VA, YB, VB, LAM = slice(0, 3), slice(3, 5), slice(5, 8), slice(8, 10), slice(10, 13)


class RodProblem(NewtonProblem):

    def __init__(self, grid: Grid, ya, yb, va, vb, sigma=SIGMA, force: ForceField = None):
        self.grid = grid
        self.ya = np.asarray(ya, dtype=float).reshape(3)
        self.yb = np.asarray(yb, dtype=float).reshape(3)
        self.va = va if isinstance(va, UnitVec3) else UnitVec3(va)
        self.vb = vb if isinstance(vb, UnitVec3) else UnitVec3(vb)
        # sigma: scalar or one value per interval
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = np.full(grid.n_intervals, float(sigma))
        if sigma.shape != (grid.n_intervals,):
            raise ConfigError(f"sigma needs {grid.n_intervals} interval values, got {sigma.shape}")
        if np.any(sigma <= 0.0):
            raise ConfigError("flexural stiffness sigma must be positive")
        self.sigma = sigma
        self.force = force if force is not None else ZeroForce()

        n_nodes, k = grid.n_nodes, np.arange(grid.n_interior)
        self.y_dofs = np.full((n_nodes, 3), -1, dtype=int)
        self.y_dofs[1:-1] = DOFS_PER_NODE * k[:, None] + 3 + np.arange(3)
        self.v_dofs = np.full((n_nodes, 2), -1, dtype=int)
        self.v_dofs[1:-1] = DOFS_PER_NODE * k[:, None] + 6 + np.arange(2)
        self.lam_dofs = DOFS_PER_NODE * np.arange(grid.n_intervals)[:, None] + np.arange(3)
        self._element_dofs = np.concatenate(
            [self.y_dofs[:-1], self.v_dofs[:-1], self.y_dofs[1:], self.v_dofs[1:], self.lam_dofs], axis=1
        )

    @property
    def dof_count(self) -> int:
        return DOFS_PER_NODE * self.grid.n_interior + 3

    def initial_state(self) -> RodState:
        return rod_initial_guess(self.grid, self.ya, self.yb, self.va, self.vb)

    def check_state(self, state: RodState):
        if state.grid != self.grid:
            raise DimensionMismatch("rod state lives on a different grid")
        boundary = (state.y[0], state.y[-1], state.v[0], state.v[-1])
        expected = (self.ya, self.yb, self.va.coords, self.vb.coords)
        if not all(np.array_equal(a, b) for a, b in zip(boundary, expected)):
            raise DimensionMismatch("rod state boundary values differ from the boundary data")

    def _v_covectors(self, state: RodState):
        """Nodal covectors of the v equation at the left and right end of every interval."""
        h = self.grid.h
        dv = self.sigma[:, None] * fd_slope(state.v[:-1], state.v[1:], h)
        half_lam = 0.5 * h * state.lam
        return -dv - half_lam, dv - half_lam

    def _residual_contributions(self, state: RodState, v_tests) -> ElementContributions:
        h = self.grid.h
        w = self.force.value(state.y)
        gv_a, gv_b = self._v_covectors(state)
        local = np.concatenate([
            0.5 * h * w[:-1] - state.lam,
            np.einsum('ei,eij->ej', gv_a, v_tests[:-1]),
            0.5 * h * w[1:] + state.lam,
            np.einsum('ei,eij->ej', gv_b, v_tests[1:]),
            np.diff(state.y, axis=0) - 0.5 * h * (state.v[:-1] + state.v[1:]),
        ], axis=1)
        return ElementContributions(self._element_dofs, local)

    def _jacobian_contributions(self, state: RodState) -> ElementContributions:
        h = self.grid.h
        n_el = self.grid.n_intervals
        bases = tangent_bases(state.v)
        ba, bb = bases[:-1], bases[1:]
        eye = np.broadcast_to(np.eye(3), (n_el, 3, 3))
        jac = np.zeros((n_el, 13, 13))

        if not self.force.is_zero:
            dw = self.force.jacobian(state.y)
            jac[:, YA, YA] = 0.5 * h * dw[:-1]
            jac[:, YB, YB] = 0.5 * h * dw[1:]
        jac[:, YA, LAM] = -eye
        jac[:, YB, LAM] = eye
        jac[:, LAM, YA] = -eye
        jac[:, LAM, YB] = eye

        stiff = (self.sigma / h)[:, None, None]
        gv_a, gv_b = self._v_covectors(state)
        conn_a = connection_matrices(state.v[:-1], gv_a)
        conn_b = connection_matrices(state.v[1:], gv_b)
        jac[:, VA, VA] = stiff * np.einsum('eim,ein->emn', ba, ba) + np.einsum('eim,eij,ejn->emn', ba, conn_a, ba)
        jac[:, VB, VB] = stiff * np.einsum('eim,ein->emn', bb, bb) + np.einsum('eim,eij,ejn->emn', bb, conn_b, bb)
        jac[:, VA, VB] = -stiff * np.einsum('eim,ein->emn', ba, bb)
        jac[:, VB, VA] = -stiff * np.einsum('eim,ein->emn', bb, ba)
        jac[:, VA, LAM] = -0.5 * h * np.swapaxes(ba, 1, 2)
        jac[:, VB, LAM] = -0.5 * h * np.swapaxes(bb, 1, 2)
        jac[:, LAM, VA] = -0.5 * h * ba
        jac[:, LAM, VB] = -0.5 * h * bb

        residual = self._residual_contributions(state, bases).residual
        return ElementContributions(self._element_dofs, residual, jac)

    # NewtonProblem

    def assemble_residual(self, state: RodState) -> np.ndarray:
        _, b = assemble(self._residual_contributions(state, tangent_bases(state.v)), self.dof_count)
        return b

    def assemble_transported_residual(self, state_old: RodState, state_new: RodState) -> np.ndarray:
        v_tests = transport_frames(state_new.v, tangent_bases(state_old.v))
        _, b = assemble(self._residual_contributions(state_new, v_tests), self.dof_count)
        return b

    def assemble_jacobian(self, state: RodState):
        return self.assemble_system(state)[0]

    def assemble_system(self, state: RodState):
        return assemble(self._jacobian_contributions(state), self.dof_count)

    def split(self, xi):
        """Coefficient blocks (y: (N, 3), v: (N, 2), lam: (N+1, 3)) of a dof vector."""
        xi = np.asarray(xi, dtype=float)
        return xi[self.y_dofs[1:-1]], xi[self.v_dofs[1:-1]], xi[self.lam_dofs]

    def retract(self, state: RodState, xi, alpha) -> RodState:
        dy, dv, dlam = self.split(xi)
        bases = tangent_bases(state.v[1:-1])
        y = np.array(state.y)
        v = np.array(state.v)
        y[1:-1] += alpha * dy
        v[1:-1] = retract_sphere(state.v[1:-1], alpha * np.einsum('nij,nj->ni', bases, dv))
        return RodState(self.grid, y, v, state.lam + alpha * dlam)

    def norm_inf(self, state: RodState, xi) -> float:
        dy, dv, dlam = self.split(xi)
        tangents = np.einsum('nij,nj->ni', tangent_bases(state.v[1:-1]), dv)
        return float(max(
            np.max(np.linalg.norm(dy, axis=1), initial=0.0),
            np.max(np.linalg.norm(tangents, axis=1), initial=0.0),
            np.max(np.linalg.norm(dlam, axis=1), initial=0.0),
        ))

    def bending_energy(self, state: RodState) -> float:
        """1/2 int sigma |v'|^2 ds."""
        curv2 = self.sigma * np.sum(fd_slope(state.v[:-1], state.v[1:], self.grid.h) ** 2, axis=1)
        return 0.5 * float(np.sum(trapezoid_accumulate(curv2, curv2, self.grid.h)))


def rod_initial_guess(grid: Grid, ya, yb, va, vb) -> RodState:
    """Affine y, normalized affine v and lam = 0 between the boundary values.

    Raises:
        DegenerateUpdate: if the interpolated direction passes through 0.
    """
    va = va.coords if isinstance(va, UnitVec3) else np.asarray(va, dtype=float)
    vb = vb.coords if isinstance(vb, UnitVec3) else np.asarray(vb, dtype=float)
    ya = np.asarray(ya, dtype=float)
    yb = np.asarray(yb, dtype=float)
    s = (grid.nodes / grid.t_end)[:, None]
    y = ya + s * (yb - ya)
    v = (1.0 - s) * va + s * vb
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    if np.any(norms <= DEGENERATE_NORM):
        raise DegenerateUpdate("interpolated rod direction vanishes (antipodal boundary directions)")
    v = v / norms
    y[0], y[-1] = ya, yb
    v[0], v[-1] = va, vb
    return RodState(grid, y, v, np.zeros((grid.n_intervals, 3)))


def _problem_for(state: RodState, sigma, omega):
    return RodProblem(state.grid, state.y[0], state.y[-1], state.v[0], state.v[-1], sigma=sigma, force=omega)


def rod_residual(state: RodState, sigma=SIGMA, omega: ForceField = None) -> np.ndarray:
    return _problem_for(state, sigma, omega).assemble_residual(state)


def rod_jacobian(state: RodState, sigma=SIGMA, omega: ForceField = None):
    return _problem_for(state, sigma, omega).assemble_jacobian(state)
