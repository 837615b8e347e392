"""Affine covariant damped Newton method for mappings into dual bundles.

A problem supplies coefficient vectors of F(x) and of the transported
residual F(x+) o V(x -> x+) with respect to the test bases at x, plus the
matrix of Q*_{F(x)} o F'(x) in the same bases. The driver only ever sees
coefficient vectors, so the damping quantities are invariant under a
common rescaling of matrix and residual.
"""

from __future__ import annotations

import abc
import logging

import numpy as np

from bundle_newton.errors import ZeroStep, failing_stage
from bundle_newton.models import NewtonConfig, NewtonIteration, NewtonTrace, Termination
from bundle_newton.services.fem1d import factorize
from config.settings import THETA_STOP

logger = logging.getLogger(__name__)


class NewtonProblem(abc.ABC):
    """Contract between a discretized problem and :func:`damped_newton`."""

    @property
    @abc.abstractmethod
    def dof_count(self) -> int:
        """Number M of unknown coefficients."""

    @abc.abstractmethod
    def assemble_residual(self, state) -> np.ndarray:
        """b_k = F(x) phi_k for the test basis at ``state``."""

    @abc.abstractmethod
    def assemble_jacobian(self, state):
        """Matrix of Q*_{F(x)} o F'(x) in the bases at ``state``."""

    @abc.abstractmethod
    def assemble_transported_residual(self, state_old, state_new) -> np.ndarray:
        """F(x_new) applied to the test basis of ``state_old`` transported to ``state_new``."""

    @abc.abstractmethod
    def retract(self, state, xi, alpha):
        """New state R_x(alpha * sum_k xi_k phi_k)."""

    @abc.abstractmethod
    def norm_inf(self, state, xi) -> float:
        """Maximum over nodes of the Euclidean norm of the represented direction."""

    def assemble_system(self, state):
        """(A, b) at ``state``; problems may override to share work."""
        return self.assemble_jacobian(state), self.assemble_residual(state)


def newton_direction(matrix, b):
    """Solve A xi + b = 0.

    Returns:
        (xi, factorization) so callers can reuse the factorization.
    """
    factor = factorize(matrix)
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b), factor
    return factor.solve(-b), factor


def simplified_rhs(r_transported, r_old, alpha):
    """Right-hand side V*F(x+) - (1 - alpha) F(x) of the simplified Newton equation."""
    return np.asarray(r_transported, dtype=float) - (1.0 - alpha) * np.asarray(r_old, dtype=float)


def compute_theta(dx_bar, dx_scaled, norm) -> float:
    """theta = |simplified step| / |alpha * Newton step|."""
    denominator = norm(dx_scaled)
    if denominator == 0.0:
        raise ZeroStep("damped Newton step has zero length")
    return norm(dx_bar) / denominator


def update_alpha(alpha, theta, theta_des) -> float:
    """alpha <- min(1, alpha * theta_des / theta)."""
    return min(1.0, alpha * theta_des / theta)


def norm_inf_nodal(xi, bases) -> float:
    """max_i |sum_j xi_{i,j} v_{i,j}| for per-node bases of shape (n, d, m)."""
    bases = np.asarray(bases, dtype=float)
    if bases.ndim == 2:
        bases = bases[None]
    coeffs = np.asarray(xi, dtype=float).reshape(bases.shape[0], bases.shape[2])
    vectors = np.einsum('nij,nj->ni', bases, coeffs)
    return float(np.max(np.linalg.norm(vectors, axis=1), initial=0.0))


def _trial_step(problem, x, dx, b, factor, alpha):
    """Retract along alpha*dx and solve the simplified Newton equation.

    Returns:
        (trial state, theta, norm of the simplified step)
    """
    with failing_stage('damping trial'):
        x_new = problem.retract(x, dx, alpha)
        rhs = simplified_rhs(problem.assemble_transported_residual(x, x_new), b, alpha)
        dx_bar = factor.solve(-rhs)
        theta = compute_theta(dx_bar, alpha * dx, lambda v: problem.norm_inf(x, v))
    return x_new, theta, problem.norm_inf(x, dx_bar)


def reached_accuracy(alpha, theta, norm_dx, norm_bar, cfg: NewtonConfig) -> bool:
    """Stopping test after a trial: alpha = 1, theta <= 1/4 and |dx| <= tol.

    A simplified step below tol/4 is round-off; theta is not checked there.
    """
    if alpha != 1.0 or norm_dx > cfg.tol:
        return False
    return theta <= THETA_STOP or norm_bar <= THETA_STOP * cfg.tol


def _converged(trace, outer, norm_dx):
    trace.terminated = Termination.CONVERGED
    trace.message = f"Desired accuracy reached after {outer} iterations (|dx| = {norm_dx:.3e})"
    logger.info(trace.message)
    return trace


def damped_newton(problem: NewtonProblem, x0, cfg: NewtonConfig = None):
    """Run the affine covariant damped Newton method.

    The first outer iteration starts its trials at ``cfg.alpha0``, every
    later one at the full step. The run stops after a trial that passes
    :func:`reached_accuracy`. With ``cfg.theta_acc = inf`` (see
    :meth:`NewtonConfig.undamped`) every full step is accepted and the
    iteration stops on |dx| <= tol alone.

    Args:
        problem: NewtonProblem implementation
        x0: initial state
        cfg: NewtonConfig, defaults if omitted

    Returns:
        (final state, NewtonTrace)
    """
    cfg = cfg or NewtonConfig()
    trace = NewtonTrace()
    x = x0

    for outer in range(1, cfg.max_outer + 1):
        with failing_stage('assemble'):
            matrix, b = problem.assemble_system(x)
        with failing_stage('solve'):
            dx, factor = newton_direction(matrix, b)
        norm_dx = problem.norm_inf(x, dx)
        record = NewtonIteration(
            outer_iter=outer,
            norm_dx=norm_dx,
            accepted_alpha=0.0,
            residual_norm=float(np.max(np.abs(b), initial=0.0)),
        )
        trace.iterations.append(record)

        # Exact root: no step and theta is undefined
        if norm_dx == 0.0:
            record.accepted_alpha = 1.0
            return x, _converged(trace, outer, norm_dx)

        if not cfg.is_damped:
            x_new, theta, _ = _trial_step(problem, x, dx, b, factor, 1.0)
            record.theta_history.append(theta)
            record.alpha_history.append(1.0)
            record.accepted_alpha = 1.0
            logger.info("Newton %d: |dx| = %.3e, theta = %.3e", outer, norm_dx, theta)
            x = x_new
            if norm_dx <= cfg.tol:
                return x, _converged(trace, outer, norm_dx)
            continue

        alpha = cfg.alpha0 if outer == 1 else 1.0
        accepted = False
        for _ in range(cfg.max_inner):
            trial_alpha = alpha
            x_new, theta, norm_bar = _trial_step(problem, x, dx, b, factor, trial_alpha)
            record.theta_history.append(theta)
            record.alpha_history.append(trial_alpha)
            logger.debug("  trial alpha = %.3e, theta = %.3e", trial_alpha, theta)

            if reached_accuracy(trial_alpha, theta, norm_dx, norm_bar, cfg):
                record.accepted_alpha = trial_alpha
                return x_new, _converged(trace, outer, norm_dx)

            # theta = 0 means the trial point is the end of the Newton path
            alpha = 1.0 if theta == 0.0 else update_alpha(trial_alpha, theta, cfg.theta_des)
            if alpha < cfg.alpha_fail:
                trace.terminated = Termination.DAMPING_FAILED
                trace.message = (
                    f"Newton's method failed: alpha = {alpha:.3e} < alpha_fail = "
                    f"{cfg.alpha_fail:.3e} in iteration {outer}"
                )
                logger.warning(trace.message)
                return x, trace
            if theta <= cfg.theta_acc:
                accepted = True
                break

        if not accepted:
            trace.terminated = Termination.DAMPING_FAILED
            trace.message = f"no acceptable damping factor within {cfg.max_inner} trials in iteration {outer}"
            logger.warning(trace.message)
            return x, trace

        record.accepted_alpha = trial_alpha
        logger.info(
            "Newton %d: |dx| = %.3e, alpha = %.3e, theta = %.3e, trials = %d",
            outer, norm_dx, trial_alpha, theta, record.inner_count,
        )
        x = x_new

    trace.terminated = Termination.MAX_ITERATIONS
    trace.message = f"no convergence within {cfg.max_outer} outer iterations"
    logger.warning(trace.message)
    return x, trace
