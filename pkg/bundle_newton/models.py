"""Domain value objects shared by the services.

All array-valued fields are stored as read-only float arrays, so instances
can be shared freely between threads and runs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from bundle_newton.errors import (
    ConfigError,
    DampingFailed,
    MaxIterations,
)
from config.settings import (
    ALPHA0,
    ALPHA_FAIL,
    FORCE_SCALE,
    GEODESIC_GAMMA0,
    GEODESIC_GAMMA_T,
    H_REF,
    MAX_INNER,
    MAX_OUTER,
    MAX_STAGES,
    N_INTERIOR,
    OBSTACLE_GAMMA0,
    OBSTACLE_GAMMA_T,
    OUTPUT_DIR,
    P0,
    P_GROWTH,
    PROBLEMS,
    ROD_VA,
    ROD_VB,
    ROD_YA,
    ROD_YB,
    SIGMA,
    T_END,
    THETA_ACC,
    THETA_DES,
    TOL,
    UNIT_NORM_TOL,
    VIOLATION_TOL,
)


def _frozen_array(values, shape=None, name='array'):
    arr = np.array(values, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class UnitVec3:
    """A point on the unit sphere in R^3."""

    coords: np.ndarray

    def __post_init__(self):
        coords = _frozen_array(self.coords, (3,), 'UnitVec3.coords')
        if abs(np.linalg.norm(coords) - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"UnitVec3 needs unit norm, got {np.linalg.norm(coords)!r}")
        object.__setattr__(self, 'coords', coords)

    @classmethod
    def normalized(cls, values) -> 'UnitVec3':
        arr = np.asarray(values, dtype=float)
        return cls(arr / np.linalg.norm(arr))

    def to_dict(self):
        return {'x': float(self.coords[0]), 'y': float(self.coords[1]), 'z': float(self.coords[2])}


@dataclass(frozen=True, eq=False)
class TangentBasis:
    """Orthonormal basis {v1, v2} of the tangent plane at ``base``."""

    base: UnitVec3
    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        v1 = _frozen_array(self.v1, (3,), 'TangentBasis.v1')
        v2 = _frozen_array(self.v2, (3,), 'TangentBasis.v2')
        gram = np.array([self.base.coords, v1, v2])
        if np.max(np.abs(gram @ gram.T - np.eye(3))) > UNIT_NORM_TOL:
            raise ValueError("TangentBasis vectors must be orthonormal and tangent")
        object.__setattr__(self, 'v1', v1)
        object.__setattr__(self, 'v2', v2)

    @property
    def matrix(self) -> np.ndarray:
        """3x2 matrix with the basis vectors as columns."""
        return np.column_stack([self.v1, self.v2])


@dataclass(frozen=True, eq=False)
class Covector3:
    """Linear functional on R^3 acting through the Euclidean pairing."""

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'coeffs', _frozen_array(self.coeffs, (3,), 'Covector3.coeffs'))

    def __call__(self, u) -> float:
        return float(self.coeffs @ np.asarray(u, dtype=float))


@dataclass(frozen=True)
class Grid:
    """Uniform grid t_i = i*h, i = 0..N+1, on [0, t_end]."""

    t_end: float
    n_interior: int

    def __post_init__(self):
        if self.n_interior < 1:
            raise ConfigError(f"Grid needs at least one interior node, got {self.n_interior}")
        if not self.t_end > 0:
            raise ConfigError(f"Grid needs t_end > 0, got {self.t_end}")

    @property
    def h(self) -> float:
        return self.t_end / (self.n_interior + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_interior + 2

    @property
    def n_intervals(self) -> int:
        return self.n_interior + 1

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n_nodes) * self.h
        t[-1] = self.t_end
        return t


@dataclass(frozen=True, eq=False)
class NodalCurve:
    """Piecewise linear curve on the sphere, boundary nodes included."""

    grid: Grid
    points: np.ndarray

    def __post_init__(self):
        points = _frozen_array(self.points, (self.grid.n_nodes, 3), 'NodalCurve.points')
        norms = np.linalg.norm(points, axis=1)
        if np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
            raise ValueError("NodalCurve points must lie on the unit sphere")
        object.__setattr__(self, 'points', points)

    @property
    def interior(self) -> np.ndarray:
        return self.points[1:-1]


@dataclass(frozen=True, eq=False)
class RodState:
    """Discrete rod: P1 positions y, P1 unit tangents v, P0 multipliers lam."""

    grid: Grid
    y: np.ndarray
    v: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        n = self.grid.n_nodes
        y = _frozen_array(self.y, (n, 3), 'RodState.y')
        v = _frozen_array(self.v, (n, 3), 'RodState.v')
        lam = _frozen_array(self.lam, (n - 1, 3), 'RodState.lam')
        if np.max(np.abs(np.linalg.norm(v, axis=1) - 1.0)) > UNIT_NORM_TOL:
            raise ValueError("RodState directions v must have unit norm")
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'v', v)
        object.__setattr__(self, 'lam', lam)

    def constraint_residual(self) -> np.ndarray:
        """Per-interval defect (y_{i+1} - y_i)/h - (v_i + v_{i+1})/2."""
        return np.diff(self.y, axis=0) / self.grid.h - 0.5 * (self.v[:-1] + self.v[1:])


@dataclass(frozen=True)
class NewtonConfig:
    """Parameters of the affine covariant damped Newton method."""

    tol: float = TOL
    theta_des: float = THETA_DES
    theta_acc: float = THETA_ACC
    alpha0: float = ALPHA0
    alpha_fail: float = ALPHA_FAIL
    max_outer: int = MAX_OUTER
    max_inner: int = MAX_INNER

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if not 0 < self.theta_des < self.theta_acc:
            raise ConfigError("need 0 < theta_des < theta_acc")
        if not (self.theta_acc < 1 or math.isinf(self.theta_acc)):
            raise ConfigError("theta_acc must be below 1 (or inf for the undamped method)")
        if not 0 < self.alpha_fail < self.alpha0 <= 1:
            raise ConfigError("need 0 < alpha_fail < alpha0 <= 1")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ConfigError("iteration limits must be at least 1")

    @classmethod
    def undamped(cls, tol: float = TOL, max_outer: int = MAX_OUTER) -> 'NewtonConfig':
        """Plain Newton iteration: full steps, every trial accepted."""
        return cls(tol=tol, alpha0=1.0, theta_acc=math.inf, max_outer=max_outer)

    @property
    def is_damped(self) -> bool:
        return not math.isinf(self.theta_acc)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


class Termination(enum.Enum):
    CONVERGED = 'Converged'
    DAMPING_FAILED = 'DampingFailed'
    MAX_ITERATIONS = 'MaxIterations'


@dataclass
class NewtonIteration:
    """Record of one outer iteration."""

    outer_iter: int
    norm_dx: float
    accepted_alpha: float
    theta_history: list = field(default_factory=list)
    alpha_history: list = field(default_factory=list)
    residual_norm: float = 0.0

    @property
    def inner_count(self) -> int:
        return len(self.theta_history)

    @property
    def theta_final(self) -> float:
        return self.theta_history[-1] if self.theta_history else float('nan')

    def to_dict(self):
        return {
            'outer_iter': self.outer_iter,
            'norm_dx_inf': self.norm_dx,
            'accepted_alpha': self.accepted_alpha,
            'inner_trials': self.inner_count,
            'theta_final': self.theta_final,
            'residual_inf': self.residual_norm,
        }


@dataclass
class NewtonTrace:
    iterations: list = field(default_factory=list)
    terminated: Optional[Termination] = None
    message: str = ''

    @property
    def converged(self) -> bool:
        return self.terminated is Termination.CONVERGED

    @property
    def outer_count(self) -> int:
        return len(self.iterations)

    def raise_for_status(self):
        """Raise the matching exception unless the run converged."""
        if self.terminated is Termination.DAMPING_FAILED:
            raise DampingFailed(self.message)
        if self.terminated is Termination.MAX_ITERATIONS:
            raise MaxIterations(self.message)


@dataclass
class PathStage:
    """One penalty level of the obstacle path following."""

    stage: int
    penalty: float
    violation: float
    trace: NewtonTrace

    def to_dict(self):
        return {
            'stage': self.stage,
            'p': self.penalty,
            'violation': self.violation,
            'outer_iters': self.trace.outer_count,
            'status': self.trace.terminated.value if self.trace.terminated else '',
        }


@dataclass
class PathTrace:
    stages: list = field(default_factory=list)
    terminated: Optional[Termination] = None
    message: str = ''

    @property
    def converged(self) -> bool:
        return self.terminated is Termination.CONVERGED

    @property
    def final_penalty(self) -> float:
        return self.stages[-1].penalty if self.stages else float('nan')

    @property
    def iterations(self) -> list:
        return [it for stage in self.stages for it in stage.trace.iterations]

    def raise_for_status(self):
        if self.terminated is Termination.DAMPING_FAILED:
            raise DampingFailed(self.message)
        if self.terminated is Termination.MAX_ITERATIONS:
            raise MaxIterations(self.message)


def _triple(values, name):
    if isinstance(values, str):
        values = [part for part in values.split(',') if part.strip()]
    try:
        triple = tuple(float(x) for x in values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name} must be three numbers: {e}") from e
    if len(triple) != 3:
        raise ConfigError(f"{name} must be three numbers, got {len(triple)}")
    return triple


@dataclass
class RunConfig:
    """Fully resolved parameters of one CLI run."""

    problem: str
    n: int = N_INTERIOR
    t_end: float = T_END
    tol: float = TOL
    theta_des: float = THETA_DES
    theta_acc: float = THETA_ACC
    alpha0: float = ALPHA0
    alpha_fail: float = ALPHA_FAIL
    max_outer: int = MAX_OUTER
    max_inner: int = MAX_INNER
    force_scale: float = FORCE_SCALE
    h_ref: float = H_REF
    p0: float = P0
    p_growth: float = P_GROWTH
    violation_tol: float = VIOLATION_TOL
    max_stages: int = MAX_STAGES
    sigma: float = SIGMA
    gamma0: Optional[tuple] = None
    gamma_t: Optional[tuple] = None
    rod_ya: tuple = ROD_YA
    rod_yb: tuple = ROD_YB
    rod_va: tuple = ROD_VA
    rod_vb: tuple = ROD_VB
    out_dir: str = OUTPUT_DIR

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}, expected one of {PROBLEMS}")
        if self.n < 1:
            raise ConfigError(f"n must be at least 1, got {self.n}")
        if not 0 < self.h_ref < 1:
            raise ConfigError(f"h_ref must lie in (0, 1), got {self.h_ref}")
        if not self.p0 > 0 or not self.p_growth > 1:
            raise ConfigError("need p0 > 0 and p_growth > 1")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        # Boundary data defaults depend on the problem
        if self.gamma0 is None:
            self.gamma0 = OBSTACLE_GAMMA0 if self.problem == 'obstacle' else GEODESIC_GAMMA0
        if self.gamma_t is None:
            self.gamma_t = OBSTACLE_GAMMA_T if self.problem == 'obstacle' else GEODESIC_GAMMA_T
        for name in ('gamma0', 'gamma_t', 'rod_ya', 'rod_yb', 'rod_va', 'rod_vb'):
            setattr(self, name, _triple(getattr(self, name), name))

    def newton_config(self) -> NewtonConfig:
        return NewtonConfig(
            tol=self.tol,
            theta_des=self.theta_des,
            theta_acc=self.theta_acc,
            alpha0=self.alpha0,
            alpha_fail=self.alpha_fail,
            max_outer=self.max_outer,
            max_inner=self.max_inner,
        )

    def grid(self) -> Grid:
        return Grid(self.t_end, self.n)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class RunOutcome:
    """Everything a CLI run hands to the output writer."""

    problem: str
    state: object
    terminated: Optional[Termination]
    message: str = ''
    iterations: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    results: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.terminated is Termination.CONVERGED

    @property
    def status(self) -> str:
        return self.terminated.value if self.terminated else 'Error'
