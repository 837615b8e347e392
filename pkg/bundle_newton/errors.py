import contextlib


class BundleNewtonError(Exception):
    """Base class for every error raised by the solver."""

    # Where the error surfaced, e.g. "path-following stage 3: solve"
    stage = None


@contextlib.contextmanager
def failing_stage(label):
    """Prefix the stage of any BundleNewtonError raised inside the block."""
    try:
        yield
    except BundleNewtonError as e:
        e.stage = f"{label}: {e.stage}" if e.stage else label
        raise


class ConfigError(BundleNewtonError, ValueError):
    """Invalid run or solver configuration."""


class DegenerateUpdate(BundleNewtonError, ArithmeticError):
    """A normalization would divide by a (near) zero vector."""


class PoleSingularity(BundleNewtonError, ArithmeticError):
    """The winding field was sampled at (or next to) a pole."""


class SingularSystem(BundleNewtonError, ArithmeticError):
    """The Newton matrix has a zero or near-zero pivot."""


class SingularConstraint(BundleNewtonError, ArithmeticError):
    """The constraint Jacobian is rank deficient, the multiplier is not unique."""


class ZeroStep(BundleNewtonError, ArithmeticError):
    """The damped Newton step has zero length, so theta is undefined."""


class DimensionMismatch(BundleNewtonError, ValueError):
    """Element contributions do not fit the dof layout."""


class DampingFailed(BundleNewtonError):
    """The damping factor dropped below alpha_fail."""


class MaxIterations(BundleNewtonError):
    """The outer iteration limit was reached before convergence."""
