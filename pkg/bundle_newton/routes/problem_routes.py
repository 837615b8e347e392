"""Problem name -> runner dispatch used by the CLI.

Each runner builds its problem from a RunConfig, solves it and returns a
RunOutcome. Setup failures surface as ConfigError; solver errors carry the
stage they came from (see :func:`failing_stage`).
"""

import logging

from bundle_newton.errors import ConfigError, failing_stage
from bundle_newton.models import RunConfig, RunOutcome, UnitVec3
from bundle_newton.services.newton import damped_newton
from bundle_newton.services.problems import GeodesicForceProblem, ObstacleProblem, RodProblem, obstacle_path_follow

logger = logging.getLogger(__name__)

PROBLEM_ROUTES = {}


def route(name):
    """Register a runner for the problem ``name``."""
    def decorator(fn):
        PROBLEM_ROUTES[name] = fn
        return fn
    return decorator


def _unit(values, name) -> UnitVec3:
    try:
        return UnitVec3.normalized(values)
    except ValueError as e:
        raise ConfigError(f"{name} is not a usable direction: {e}") from e


def _setup(factory):
    try:
        return factory()
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e


@route('geodesic-force')
def run_geodesic_force(cfg: RunConfig) -> RunOutcome:
    newton_cfg = _setup(cfg.newton_config)
    problem = _setup(lambda: GeodesicForceProblem(
        cfg.grid(), _unit(cfg.gamma0, 'gamma0'), _unit(cfg.gamma_t, 'gamma_t'), force_scale=cfg.force_scale,
    ))
    with failing_stage('initial guess'):
        curve = problem.initial_curve()
    curve, trace = damped_newton(problem, curve, newton_cfg)
    return RunOutcome(
        problem=cfg.problem,
        state=curve,
        terminated=trace.terminated,
        message=trace.message,
        iterations=trace.iterations,
        results={'energy': problem.dirichlet_energy(curve)},
    )


@route('obstacle')
def run_obstacle(cfg: RunConfig) -> RunOutcome:
    newton_cfg = _setup(cfg.newton_config)
    problem = _setup(lambda: ObstacleProblem(
        cfg.grid(), _unit(cfg.gamma0, 'gamma0'), _unit(cfg.gamma_t, 'gamma_t'),
        h_ref=cfg.h_ref, p=cfg.p0, p_growth=cfg.p_growth, violation_tol=cfg.violation_tol,
    ))
    if cfg.max_stages < 1:
        raise ConfigError(f"max_stages must be at least 1, got {cfg.max_stages}")
    curve, trace = obstacle_path_follow(problem, newton_cfg, max_stages=cfg.max_stages)
    final_p = trace.stages[-1].penalty if trace.stages else problem.p
    return RunOutcome(
        problem=cfg.problem,
        state=curve,
        terminated=trace.terminated,
        message=trace.message,
        iterations=trace.iterations,
        stages=trace.stages,
        results={
            'final_p': final_p,
            'violation': problem.violation(curve),
            'stages': len(trace.stages),
            'max_z': float(curve.points[:, 2].max()),
        },
    )


@route('rod')
def run_rod(cfg: RunConfig) -> RunOutcome:
    newton_cfg = _setup(cfg.newton_config)
    problem = _setup(lambda: RodProblem(
        cfg.grid(), cfg.rod_ya, cfg.rod_yb, _unit(cfg.rod_va, 'rod_va'), _unit(cfg.rod_vb, 'rod_vb'), sigma=cfg.sigma,
    ))
    with failing_stage('initial guess'):
        state = problem.initial_state()
    state, trace = damped_newton(problem, state, newton_cfg)
    return RunOutcome(
        problem=cfg.problem,
        state=state,
        terminated=trace.terminated,
        message=trace.message,
        iterations=trace.iterations,
        results={
            'constraint_defect_inf': float(abs(state.constraint_residual()).max()),
            'bending_energy': problem.bending_energy(state),
        },
    )


def dispatch(cfg: RunConfig) -> RunOutcome:
    try:
        runner = PROBLEM_ROUTES[cfg.problem]
    except KeyError:
        raise ConfigError(f"no runner registered for problem {cfg.problem!r}") from None
    logger.info("Running %s with N = %d", cfg.problem, cfg.n)
    return runner(cfg)
