import argparse
import logging
import os
import sys

from bundle_newton.errors import BundleNewtonError, ConfigError
from bundle_newton.models import RunConfig, Termination
from bundle_newton.routes.problem_routes import dispatch
from bundle_newton.utils.output_writer import load_config_file, write_outputs
from config.settings import EXIT_CODES, LOG_LEVEL, PROBLEMS

logger = logging.getLogger(__name__)

INT_KEYS = {'n', 'max_outer', 'max_inner', 'max_stages'}
STR_KEYS = {'problem', 'out_dir', 'gamma0', 'gamma_t', 'rod_ya', 'rod_yb', 'rod_va', 'rod_vb'}

STATUS_EXIT = {
    Termination.CONVERGED: EXIT_CODES['converged'],
    Termination.DAMPING_FAILED: EXIT_CODES['damping_failed'],
    Termination.MAX_ITERATIONS: EXIT_CODES['max_iterations'],
}


class _Parser(argparse.ArgumentParser):
    """Argument errors are config errors (exit 4), not argparse's exit 2."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog='bundle-newton',
        description="Damped Newton solver for variational problems on the sphere.",
    )
    parser.add_argument('problem', nargs='?', choices=PROBLEMS, help="problem to solve")
    parser.add_argument('--n', type=int, help="number of interior grid nodes N")
    parser.add_argument('--tol', type=float)
    parser.add_argument('--theta-des', type=float)
    parser.add_argument('--theta-acc', type=float)
    parser.add_argument('--alpha0', type=float)
    parser.add_argument('--alpha-fail', type=float)
    parser.add_argument('--max-outer', type=int)
    parser.add_argument('--force-scale', type=float, help="winding field factor (geodesic-force)")
    parser.add_argument('--h-ref', type=float, help="cap height (obstacle)")
    parser.add_argument('--p0', type=float, help="initial penalty (obstacle)")
    parser.add_argument('--p-growth', type=float, help="penalty growth per stage (obstacle)")
    parser.add_argument('--sigma', type=float, help="flexural stiffness (rod)")
    parser.add_argument('--out-dir', help="directory for iterates.csv, curve.csv and meta.txt")
    parser.add_argument('--config', help="flat key=value file; flags override its values")
    parser.add_argument('--log-level', default=None, help=f"logging level (default {LOG_LEVEL})")
    return parser


def _convert(key, value):
    if key in STR_KEYS:
        return value
    try:
        return int(value) if key in INT_KEYS else float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value {value!r} for {key}") from e


def resolve_config(args) -> RunConfig:
    """Settings defaults, then the --config file, then explicit flags."""
    values = load_config_file(args.config) if args.config else {}
    flags = vars(args)
    for key, value in flags.items():
        if key in ('config', 'log_level') or value is None:
            continue
        values[key] = value
    if 'problem' not in values:
        raise ConfigError(f"no problem given, expected one of {PROBLEMS}")
    converted = {key: _convert(key, value) for key, value in values.items()}
    try:
        return RunConfig(**converted)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def run(cfg: RunConfig) -> int:
    """Solve the configured problem, write the result files and return the exit status."""
    try:
        outcome = dispatch(cfg)
    except ConfigError as e:
        print(f"❌ Config error: {e}")
        return EXIT_CODES['config_error']
    except BundleNewtonError as e:
        print(f"❌ {type(e).__name__} during {e.stage or 'setup'}: {e}")
        return EXIT_CODES['solver_error']

    try:
        paths = write_outputs(cfg.out_dir, cfg, outcome)
    except OSError as e:
        print(f"❌ Cannot write results to {cfg.out_dir}: {e}")
        return EXIT_CODES['config_error']

    icon = '✅' if outcome.converged else '⚠️ '
    print(f"{icon} {cfg.problem}: {outcome.status} after {len(outcome.iterations)} Newton iterations")
    print(f"   {outcome.message}")
    print(f"📁 Results in {os.path.dirname(paths['meta']) or '.'}")
    return STATUS_EXIT[outcome.terminated]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # Accept "bundle-newton run <problem> ..." as well
    if argv[:1] == ['run']:
        argv = argv[1:]
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=(args.log_level or LOG_LEVEL).upper(),
            format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        )
        cfg = resolve_config(args)
    except ConfigError as e:
        print(f"❌ Config error: {e}")
        return EXIT_CODES['config_error']
    return run(cfg)


if __name__ == '__main__':
    sys.exit(main())
