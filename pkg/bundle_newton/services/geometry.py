"""Embedded-manifold primitives for the unit sphere S^2 in R^3.

Every function is vectorized over leading axes: a point may be a single
3-vector or an ``(n, 3)`` stack of nodal points. Projections, their
derivatives, the retraction and the transports are the closed-form
expressions of the embedding; nothing here differentiates numerically.

The second half of the module treats a general submanifold {c(x) = 0} of
R^n and evaluates the covariant Hessian of a function restricted to it,
once through the Lagrange multiplier and once through the derivative of
the orthogonal projector onto ker c'(x).
"""

import logging

import numpy as np
import scipy.linalg

from bundle_newton.errors import DegenerateUpdate, SingularConstraint
from bundle_newton.models import TangentBasis, UnitVec3
from config.settings import DEGENERATE_NORM, SINGULAR_CONDITION

logger = logging.getLogger(__name__)


def _coords(y):
    if isinstance(y, UnitVec3):
        return y.coords
    return np.asarray(y, dtype=float)


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def tangent_project(y, h):
    """Orthogonal projection P(y)h = h - y<y, h> onto the tangent plane at y."""
    y = _coords(y)
    h = np.asarray(h, dtype=float)
    return h - y * _dot(y, h)


def tangent_project_deriv(y, v, u):
    """(P'(y)v)u = -y<v, u> - v<y, u>."""
    y = _coords(y)
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    return -y * _dot(v, u) - v * _dot(y, u)


def retract_sphere(y, d):
    """Retraction by normalization, R_y(d) = (y + d) / |y + d|.

    Raises:
        DegenerateUpdate: if |y + d| <= 1e-12 at any node.
    """
    z = _coords(y) + np.asarray(d, dtype=float)
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    if np.any(norms <= DEGENERATE_NORM):
        raise DegenerateUpdate("retraction hit an antipodal collapse (|y + d| ~ 0)")
    return z / norms


def transport_vector(from_point, to_point, u):
    """Vector transport by projection: tangent u at ``from_point`` -> P(to_point)u.

    Only ``to_point`` enters the formula; ``from_point`` names the fibre u
    lives in. The result may vanish when u is parallel to ``to_point``.
    """
    return tangent_project(to_point, u)


def connection_matrices(points, covectors) -> np.ndarray:
    """Matrices M_k with u^T M_k d = <g_k, (P'(y_k)d)u>, shape (n, 3, 3).

    This is the term the dual connection of the projection transport adds
    to the Euclidean derivative of a residual with nodal covector g_k.
    """
    y = np.atleast_2d(_coords(points))
    g = np.atleast_2d(np.asarray(covectors, dtype=float))
    gy = np.sum(g * y, axis=1)
    return -gy[:, None, None] * np.eye(3) - np.einsum('ni,nj->nij', y, g)


def transport_frames(to_points, frames):
    """Transport stacked tangent frames ``(n, 3, m)`` to ``to_points`` ``(n, 3)``."""
    y = np.atleast_2d(_coords(to_points))
    frames = np.asarray(frames, dtype=float)
    return frames - y[:, :, None] * np.einsum('ni,nij->nj', y, frames)[:, None, :]


def tangent_bases(points) -> np.ndarray:
    """Per-node orthonormal tangent bases as an ``(n, 3, 2)`` array.

    The standard axis least aligned with each point is orthogonalized
    against it, the second vector completes a right-handed frame.
    """
    y = np.atleast_2d(_coords(points))
    axis = np.argmin(np.abs(y), axis=1)
    e = np.zeros_like(y)
    e[np.arange(len(y)), axis] = 1.0
    v1 = e - y * _dot(y, e)
    v1 /= np.linalg.norm(v1, axis=1, keepdims=True)
    v2 = np.cross(y, v1)
    v2 /= np.linalg.norm(v2, axis=1, keepdims=True)
    return np.stack([v1, v2], axis=2)


def tangent_basis(y) -> TangentBasis:
    """Deterministic orthonormal basis of the tangent plane at a single point."""
    base = y if isinstance(y, UnitVec3) else UnitVec3(y)
    frame = tangent_bases(base.coords)[0]
    return TangentBasis(base=base, v1=frame[:, 0], v2=frame[:, 1])


def sphere_projector(y) -> np.ndarray:
    """Matrix of P(y) = Id - y y^T."""
    y = _coords(y)
    return np.eye(3) - np.outer(y, y)


# Constrained covariant Hessian on {c(x) = 0} in R^n

def _check_constraint_rank(cp):
    cp = np.atleast_2d(np.asarray(cp, dtype=float))
    gram = cp @ cp.T
    if np.linalg.cond(gram) > SINGULAR_CONDITION:
        raise SingularConstraint(f"constraint Jacobian of shape {cp.shape} is rank deficient")
    return cp, gram


def lagrange_multiplier(fp, cp) -> np.ndarray:
    """Multiplier lambda with (f'(x) + lambda c'(x)) w = 0 for all w in (ker c'(x))^perp.

    Args:
        fp: gradient f'(x), shape (n,)
        cp: constraint Jacobian c'(x), shape (k, n)

    Returns:
        lambda, shape (k,)
    """
    cp, gram = _check_constraint_rank(cp)
    return -scipy.linalg.solve(gram, cp @ np.asarray(fp, dtype=float), assume_a='pos')


def constrained_hessian_apply(fpp, cp, cpp, lam, dx) -> np.ndarray:
    """Covariant Hessian f''(x)dx + lambda c''(x)dx as a covector on R^n.

    Only its action on ker c'(x) is meaningful.

    Args:
        fpp: Hessian of f, shape (n, n)
        cp: constraint Jacobian, shape (k, n)
        cpp: constraint second derivatives, shape (k, n, n)
        lam: multiplier, shape (k,)
        dx: direction in ker c'(x), shape (n,)
    """
    cp, _ = _check_constraint_rank(cp)
    dx = np.asarray(dx, dtype=float)
    cpp = np.asarray(cpp, dtype=float).reshape(cp.shape[0], cp.shape[1], cp.shape[1])
    defect = np.max(np.abs(cp @ dx), initial=0.0)
    if defect > 1e-10 * (1.0 + np.max(np.abs(dx), initial=0.0)):
        logger.warning("constrained_hessian_apply: dx leaves ker c' by %.3e", defect)
    return np.asarray(fpp, dtype=float) @ dx + np.einsum('k,kij,j->i', np.asarray(lam, dtype=float), cpp, dx)


def kernel_projector(cp) -> np.ndarray:
    """Orthogonal projector onto ker c'(x)."""
    cp, gram = _check_constraint_rank(cp)
    return np.eye(cp.shape[1]) - cp.T @ scipy.linalg.solve(gram, cp, assume_a='pos')


def projected_hessian_apply(fp, fpp, cp, cpp, dx) -> np.ndarray:
    """Covector e -> f''(x)dx e + f'(x) (P'(x)dx) e with P the projector onto ker c'.

    This is the dual connection of the projection transport, evaluated with
    the explicit derivative of the projector instead of a multiplier.
    """
    cp, gram = _check_constraint_rank(cp)
    dx = np.asarray(dx, dtype=float)
    cpp = np.asarray(cpp, dtype=float).reshape(cp.shape[0], cp.shape[1], cp.shape[1])
    # Derivative of A = c'(x) along dx
    dA = np.einsum('kij,j->ki', cpp, dx)
    ginv = np.linalg.inv(gram)
    dgram = dA @ cp.T + cp @ dA.T
    dP = -(dA.T @ ginv @ cp + cp.T @ ginv @ dA - cp.T @ ginv @ dgram @ ginv @ cp)
    return np.asarray(fpp, dtype=float) @ dx + dP.T @ np.asarray(fp, dtype=float)
