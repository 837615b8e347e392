from bundle_newton.services.problems.forces import (
    ConstantForce,
    ForceField,
    WindingForce,
    ZeroForce,
    winding_force,
    winding_force_deriv,
)
from bundle_newton.services.problems.geodesic import (
    GeodesicForceProblem,
    SphereCurveProblem,
    connecting_geodesic,
    geodesic_jacobian,
    geodesic_residual,
    is_tangent_field,
)
from bundle_newton.services.problems.obstacle import (
    ObstacleProblem,
    obstacle_jacobian,
    obstacle_path_follow,
    obstacle_residual,
    penalty_max,
    penalty_max_deriv,
)
from bundle_newton.services.problems.rod import RodProblem, rod_initial_guess, rod_jacobian, rod_residual

__all__ = [
    'ConstantForce',
    'ForceField',
    'GeodesicForceProblem',
    'ObstacleProblem',
    'RodProblem',
    'SphereCurveProblem',
    'WindingForce',
    'ZeroForce',
    'connecting_geodesic',
    'geodesic_jacobian',
    'geodesic_residual',
    'is_tangent_field',
    'obstacle_jacobian',
    'obstacle_path_follow',
    'obstacle_residual',
    'penalty_max',
    'penalty_max_deriv',
    'rod_initial_guess',
    'rod_jacobian',
    'rod_residual',
    'winding_force',
    'winding_force_deriv',
]
