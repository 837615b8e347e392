"""Geodesic avoiding the north pole cap {y3 >= 1 - h_ref}.

The state constraint is relaxed by the Moreau-Yosida penalty
p/2 int m(gamma_3 - 1 + h_ref)^2 dt with m(x) = max(0, x), whose derivative
is only Newton-differentiable; the Newton matrix uses m'(x) = 1 for x > 0
and 0 otherwise (kink included). A path-following loop drives p up by a
fixed factor until the curve violates the cap by at most ``violation_tol``.
"""

from __future__ import annotations

import logging

import numpy as np

from bundle_newton.errors import ConfigError, failing_stage
from bundle_newton.models import Grid, NewtonConfig, NodalCurve, PathStage, PathTrace, Termination
from bundle_newton.services.fem1d import trapezoid_accumulate
from bundle_newton.services.newton import damped_newton
from bundle_newton.services.problems.geodesic import SphereCurveProblem
from config.settings import H_REF, MAX_STAGES, P0, P_GROWTH, VIOLATION_TOL

logger = logging.getLogger(__name__)

E3 = np.array([0.0, 0.0, 1.0])


def penalty_max(x):
    """m(x) = max(0, x)."""
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def penalty_max_deriv(x):
    """Newton derivative of m, with the value 0 at the kink."""
    return (np.asarray(x, dtype=float) > 0.0).astype(float)


class ObstacleProblem(SphereCurveProblem):
    """Penalized geodesic problem for one penalty level ``p``."""

    def __init__(self, grid: Grid, gamma0, gamma_t, h_ref=H_REF, p=P0,
                 p_growth=P_GROWTH, violation_tol=VIOLATION_TOL):
        super().__init__(grid, gamma0, gamma_t)
        if not 0.0 < h_ref < 1.0:
            raise ConfigError(f"h_ref must lie in (0, 1), got {h_ref}")
        if not p > 0.0:
            raise ConfigError(f"penalty must be positive, got {p}")
        if not p_growth > 1.0:
            raise ConfigError(f"p_growth must exceed 1, got {p_growth}")
        self.h_ref = float(h_ref)
        self.p = float(p)
        self.p_growth = float(p_growth)
        self.violation_tol = float(violation_tol)

    def with_penalty(self, p) -> 'ObstacleProblem':
        return ObstacleProblem(self.grid, self.gamma0, self.gamma_t, self.h_ref, p,
                               self.p_growth, self.violation_tol)

    def constraint(self, points) -> np.ndarray:
        """c(y) = y3 - 1 + h_ref per node; positive inside the cap."""
        return np.asarray(points, dtype=float)[:, 2] - 1.0 + self.h_ref

    def violation(self, curve: NodalCurve) -> float:
        return float(np.max(penalty_max(self.constraint(curve.points))))

    def _element_covectors(self, points):
        cov = super()._element_covectors(points)
        push = 0.5 * self.grid.h * self.p * penalty_max(self.constraint(points))
        cov[:, 0, 2] += push[:-1]
        cov[:, 1, 2] += push[1:]
        return cov

    def _element_hessians(self, points):
        hess = super()._element_hessians(points)
        active = 0.5 * self.grid.h * self.p * penalty_max_deriv(self.constraint(points))
        hess[:, 0] += active[:-1, None, None] * np.outer(E3, E3)
        hess[:, 1] += active[1:, None, None] * np.outer(E3, E3)
        return hess

    def objective(self, curve: NodalCurve) -> float:
        """Penalized energy 1/2 int |gamma'|^2 + p/2 int m(c(gamma))^2 dt."""
        m2 = penalty_max(self.constraint(curve.points)) ** 2
        penalty = 0.5 * self.p * float(np.sum(trapezoid_accumulate(m2[:-1], m2[1:], self.grid.h)))
        return self.dirichlet_energy(curve) + penalty


def obstacle_residual(curve: NodalCurve, p, h_ref) -> np.ndarray:
    problem = ObstacleProblem(curve.grid, curve.points[0], curve.points[-1], h_ref=h_ref, p=p)
    return problem.assemble_residual(curve)


def obstacle_jacobian(curve: NodalCurve, p, h_ref):
    problem = ObstacleProblem(curve.grid, curve.points[0], curve.points[-1], h_ref=h_ref, p=p)
    return problem.assemble_jacobian(curve)


def obstacle_path_follow(problem: ObstacleProblem, cfg: NewtonConfig = None,
                         initial: NodalCurve = None, max_stages=MAX_STAGES):
    """Solve a sequence of penalized problems with p growing geometrically.

    Every stage is warm-started from the previous solution. If a stage's
    Newton solve fails, the curve of the last successful stage is returned
    together with the failed stage in the trace.

    Returns:
        (curve, PathTrace)
    """
    curve = initial if initial is not None else problem.initial_curve()
    problem.check_state(curve)
    trace = PathTrace()

    violation = problem.violation(curve)
    if violation <= problem.violation_tol:
        trace.terminated = Termination.CONVERGED
        trace.message = f"initial curve already respects the cap (violation {violation:.3e})"
        logger.info(trace.message)
        return curve, trace

    stage_problem = problem
    for stage in range(1, max_stages + 1):
        logger.info("Stage %d: p = %.6g", stage, stage_problem.p)
        with failing_stage(f'path-following stage {stage}'):
            candidate, newton_trace = damped_newton(stage_problem, curve, cfg)
        if not newton_trace.converged:
            trace.stages.append(PathStage(stage, stage_problem.p, stage_problem.violation(candidate), newton_trace))
            trace.terminated = newton_trace.terminated
            trace.message = f"stage {stage} (p = {stage_problem.p:.6g}) failed: {newton_trace.message}"
            logger.warning(trace.message)
            return curve, trace

        curve = candidate
        violation = stage_problem.violation(curve)
        trace.stages.append(PathStage(stage, stage_problem.p, violation, newton_trace))
        logger.info(
            "Stage %d done: violation = %.3e, objective = %.6g, %d Newton iterations",
            stage, violation, stage_problem.objective(curve), newton_trace.outer_count,
        )
        if violation <= problem.violation_tol:
            trace.terminated = Termination.CONVERGED
            trace.message = f"cap respected after {stage} stages (p = {stage_problem.p:.6g}, violation {violation:.3e})"
            logger.info(trace.message)
            return curve, trace
        stage_problem = stage_problem.with_penalty(stage_problem.p * stage_problem.p_growth)

    trace.terminated = Termination.MAX_ITERATIONS
    trace.message = f"violation {violation:.3e} still above {problem.violation_tol:.3e} after {max_stages} stages"
    logger.warning(trace.message)
    return curve, trace
