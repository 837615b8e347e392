"""Result files of a CLI run and the flat key=value config file format.

iterates.csv, curve.csv and stages.csv are comma separated with a header
row and LF line endings; floats are written with 17 significant digits so
a rerun can be compared bit for bit. meta.txt lists every resolved
parameter as ``key=value`` followed by ``result_*`` entries; it can be
passed back with ``--config``, the result entries are skipped on load.
"""

import logging
import math
import os
from dataclasses import fields

from dotenv import dotenv_values

from bundle_newton.errors import ConfigError
from bundle_newton.models import NodalCurve, RodState, RunConfig, RunOutcome
from config.settings import CURVE_FILE, FLOAT_DIGITS, ITERATES_FILE, META_FILE, STAGES_FILE

logger = logging.getLogger(__name__)

RESULT_PREFIX = 'result_'

ITERATE_COLUMNS = ['outer_iter', 'norm_dx_inf', 'accepted_alpha', 'inner_trials', 'theta_final', 'residual_inf']
STAGE_COLUMNS = ['stage', 'p', 'violation', 'outer_iters', 'status']
CURVE_COLUMNS = ['t', 'x', 'y', 'z']
ROD_COLUMNS = ['t', 'x', 'y', 'z', 'vx', 'vy', 'vz', 'lx', 'ly', 'lz']


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        return format(value, f'.{FLOAT_DIGITS}g')
    if isinstance(value, (tuple, list)):
        return ','.join(format_value(v) for v in value)
    if hasattr(value, 'dtype'):
        return format_value(value.item() if value.ndim == 0 else [float(v) for v in value])
    return str(value)


def _write_table(path, columns, rows):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(','.join(columns) + '\n')
        for row in rows:
            f.write(','.join(format_value(row[c]) for c in columns) + '\n')


def write_iterates(path, iterations):
    _write_table(path, ITERATE_COLUMNS, [it.to_dict() for it in iterations])


def write_stages(path, stages):
    _write_table(path, STAGE_COLUMNS, [stage.to_dict() for stage in stages])


def curve_rows(state):
    """Rows of curve.csv; for the rod, lam of [t_i, t_{i+1}] sits on node i+1 and node 0 repeats interval 0."""
    t = state.grid.nodes
    if isinstance(state, NodalCurve):
        return [dict(zip(CURVE_COLUMNS, (float(t[i]), *map(float, p)))) for i, p in enumerate(state.points)]
    if isinstance(state, RodState):
        rows = []
        for i in range(state.grid.n_nodes):
            lam = state.lam[max(i - 1, 0)]
            values = (float(t[i]), *map(float, state.y[i]), *map(float, state.v[i]), *map(float, lam))
            rows.append(dict(zip(ROD_COLUMNS, values)))
        return rows
    raise TypeError(f"no curve layout for {type(state).__name__}")


def write_curve(path, state):
    columns = ROD_COLUMNS if isinstance(state, RodState) else CURVE_COLUMNS
    _write_table(path, columns, curve_rows(state))


def write_meta(path, cfg: RunConfig, outcome: RunOutcome):
    entries = cfg.to_dict()
    entries.pop('out_dir')
    results = {
        'status': outcome.status,
        'message': outcome.message,
        'outer_iterations': len(outcome.iterations),
    }
    if outcome.iterations:
        results['final_norm_dx_inf'] = outcome.iterations[-1].norm_dx
    results.update(outcome.results)
    entries.update({RESULT_PREFIX + key: value for key, value in results.items()})
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for key, value in entries.items():
            text = format_value(value)
            # Quote values that dotenv would otherwise split or strip
            if any(ch in text for ch in ' #"\'=') or text != text.strip():
                text = '"' + text.replace('\\', '\\\\').replace('"', '\\"') + '"'
            f.write(f'{key}={text}\n')


def write_outputs(out_dir, cfg: RunConfig, outcome: RunOutcome) -> dict:
    """Write every result file of a run into ``out_dir`` and return their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        'iterates': os.path.join(out_dir, ITERATES_FILE),
        'meta': os.path.join(out_dir, META_FILE),
    }
    write_iterates(paths['iterates'], outcome.iterations)
    if outcome.state is not None:
        paths['curve'] = os.path.join(out_dir, CURVE_FILE)
        write_curve(paths['curve'], outcome.state)
    if cfg.problem == 'obstacle':
        paths['stages'] = os.path.join(out_dir, STAGES_FILE)
        write_stages(paths['stages'], outcome.stages)
    write_meta(paths['meta'], cfg, outcome)
    logger.info("Wrote %s", ', '.join(sorted(paths.values())))
    return paths


CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def load_config_file(path) -> dict:
    """Flat key=value config file as a dict of strings.

    Blank lines and ``#`` comments are allowed, ``result_*`` keys are
    ignored, any other unknown key is a ConfigError.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    config = {}
    for key, value in values.items():
        key = key.strip().replace('-', '_')
        if key.startswith(RESULT_PREFIX):
            continue
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        if value is None:
            raise ConfigError(f"config key {key!r} in {path} has no value")
        config[key] = value
    return config
