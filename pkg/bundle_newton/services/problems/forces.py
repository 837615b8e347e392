"""Force fields omega: R^3 -> (R^3)^*, evaluated nodewise.

Covectors are stored by their coefficient vectors, ``value`` returns an
``(n, 3)`` stack and ``jacobian`` the Euclidean derivatives as ``(n, 3, 3)``
with ``jacobian[k] @ d`` the directional derivative at node k.
"""

import abc

import numpy as np

from bundle_newton.errors import PoleSingularity
from bundle_newton.models import Covector3
from config.settings import FORCE_SCALE, POLE_THRESHOLD


class ForceField(abc.ABC):

    @abc.abstractmethod
    def value(self, points) -> np.ndarray:
        """Coefficients of omega(y) for every row of ``points``."""

    @abc.abstractmethod
    def jacobian(self, points) -> np.ndarray:
        """Euclidean derivative of the coefficients for every row of ``points``."""

    @property
    def is_zero(self) -> bool:
        return False


class ZeroForce(ForceField):

    def value(self, points):
        return np.zeros_like(np.atleast_2d(np.asarray(points, dtype=float)))

    def jacobian(self, points):
        n = np.atleast_2d(points).shape[0]
        return np.zeros((n, 3, 3))

    @property
    def is_zero(self):
        return True


class ConstantForce(ForceField):
    """Dead load, e.g. gravity acting on a rod."""

    def __init__(self, vector):
        self.vector = np.asarray(vector, dtype=float).reshape(3)

    def value(self, points):
        n = np.atleast_2d(points).shape[0]
        return np.tile(self.vector, (n, 1))

    def jacobian(self, points):
        n = np.atleast_2d(points).shape[0]
        return np.zeros((n, 3, 3))


class WindingForce(ForceField):
    """Scaled winding field omega(y) = s*y3/(y1^2 + y2^2) <(-y2, y1, 0), .>.

    Off the sphere the same expression is used; only on-sphere values and
    tangential derivatives ever enter an assembly.
    """

    def __init__(self, scale=FORCE_SCALE):
        self.scale = float(scale)

    @property
    def is_zero(self):
        return self.scale == 0.0

    def _radial(self, points):
        y = np.atleast_2d(np.asarray(points, dtype=float))
        q = y[:, 0] ** 2 + y[:, 1] ** 2
        if np.any(q <= POLE_THRESHOLD):
            raise PoleSingularity("winding field evaluated at a pole (y1^2 + y2^2 ~ 0)")
        return y, q

    def value(self, points):
        y, q = self._radial(points)
        prefactor = self.scale * y[:, 2] / q
        return prefactor[:, None] * np.column_stack([-y[:, 1], y[:, 0], np.zeros(len(y))])

    def jacobian(self, points):
        y, q = self._radial(points)
        c = self.scale * y[:, 2] / q
        a = np.column_stack([-y[:, 1], y[:, 0], np.zeros(len(y))])
        grad_c = self.scale * np.column_stack([
            -2.0 * y[:, 2] * y[:, 0] / q ** 2,
            -2.0 * y[:, 2] * y[:, 1] / q ** 2,
            1.0 / q,
        ])
        rotation = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        return np.einsum('ni,nj->nij', a, grad_c) + c[:, None, None] * rotation


def winding_force(y, scale=FORCE_SCALE) -> Covector3:
    """Winding field at a single point as a Covector3."""
    return Covector3(WindingForce(scale).value(y)[0])


def winding_force_deriv(y, dy, scale=FORCE_SCALE) -> Covector3:
    """Directional derivative of the winding field at y along dy."""
    return Covector3(WindingForce(scale).jacobian(y)[0] @ np.asarray(dy, dtype=float))
