import numpy as np
import pytest

from bundle_newton.app import build_parser, main, resolve_config
from bundle_newton.errors import ConfigError
from bundle_newton.models import Grid
from bundle_newton.utils.output_writer import (
    CURVE_COLUMNS,
    ITERATE_COLUMNS,
    ROD_COLUMNS,
    STAGE_COLUMNS,
    curve_rows,
    format_value,
    load_config_file,
)


def _header(path):
    return path.read_text(encoding='utf-8').splitlines()[0].split(',')


def _write(path, text):
    path.write_text(text, encoding='utf-8')
    return str(path)


# Output formatting

def test_format_value():
    assert format_value(0.1) == '0.10000000000000001'
    assert format_value(1e-10) == '1e-10'
    assert format_value(float('nan')) == 'nan'
    assert format_value(True) == 'true'
    assert format_value((1.0, -2.5, 0.0)) == '1,-2.5,0'
    assert format_value(np.float64(0.5)) == '0.5'
    assert format_value(np.int64(3)) == '3'
    assert format_value(np.array([1.0, 2.0])) == '1,2'
    assert format_value('rod') == 'rod'


def test_rod_multiplier_on_right_node(random_rod_state):
    grid = Grid(1.0, 2)
    state = random_rod_state(grid)
    rows = curve_rows(state)
    assert len(rows) == 4
    assert [rows[0][c] for c in ('lx', 'ly', 'lz')] == list(state.lam[0])
    for i in range(1, 4):
        assert [rows[i][c] for c in ('lx', 'ly', 'lz')] == list(state.lam[i - 1])
    assert rows[-1]['t'] == 1.0


# Config file

def test_config_file_keys(tmp_path):
    path = _write(tmp_path / 'run.txt', "# geodesic run\nproblem=geodesic-force\nmax-outer=7\nresult_status=Converged\n")
    assert load_config_file(path) == {'problem': 'geodesic-force', 'max_outer': '7'}


def test_config_file_unknown_key(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(_write(tmp_path / 'bad.txt', "problem=rod\nfoo=1\n"))


def test_config_file_has_no_seed(tmp_path):
    # The random seed belongs to the test fixtures, not to a run
    with pytest.raises(ConfigError):
        load_config_file(_write(tmp_path / 'seeded.txt', "problem=rod\nseed=3\n"))


def test_config_file_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(str(tmp_path / 'nope.txt'))


def test_flags_override_config_file(tmp_path):
    path = _write(tmp_path / 'run.txt', "problem=rod\nn=5\nsigma=2\n")
    cfg = resolve_config(build_parser().parse_args(['--config', path, '--n', '7']))
    assert cfg.problem == 'rod'
    assert cfg.n == 7 and cfg.sigma == 2.0


def test_boundary_triples_from_config(tmp_path):
    path = _write(tmp_path / 'run.txt', "problem=geodesic-force\ngamma0=1,0,0\ngamma_t=0,1,0\n")
    cfg = resolve_config(build_parser().parse_args(['--config', path]))
    assert cfg.gamma0 == (1.0, 0.0, 0.0) and cfg.gamma_t == (0.0, 1.0, 0.0)


# CLI runs

def test_geodesic_run_writes_results(tmp_path, capsys):
    out = tmp_path / 'geo'
    assert main(['run', 'geodesic-force', '--n', '10', '--out-dir', str(out)]) == 0
    assert '✅' in capsys.readouterr().out

    iterates = out / 'iterates.csv'
    assert b'\r\n' not in iterates.read_bytes()
    assert _header(iterates) == ITERATE_COLUMNS
    table = np.loadtxt(iterates, delimiter=',', skiprows=1, ndmin=2)
    assert len(table) <= 8
    assert table[-1, 1] <= 1e-10
    np.testing.assert_array_equal(table[:, 0], np.arange(1, len(table) + 1))

    curve = np.loadtxt(out / 'curve.csv', delimiter=',', skiprows=1)
    assert _header(out / 'curve.csv') == CURVE_COLUMNS
    assert curve.shape == (12, 4)
    np.testing.assert_allclose(np.linalg.norm(curve[:, 1:], axis=1), 1.0, atol=1e-14)

    meta = (out / 'meta.txt').read_text(encoding='utf-8')
    assert 'result_status=Converged' in meta.splitlines()
    assert not (out / 'stages.csv').exists()


def test_meta_reproduces_the_run(tmp_path):
    first, second = tmp_path / 'a', tmp_path / 'b'
    assert main(['geodesic-force', '--n', '6', '--theta-des', '0.4', '--out-dir', str(first)]) == 0
    assert main(['--config', str(first / 'meta.txt'), '--out-dir', str(second)]) == 0
    assert (first / 'iterates.csv').read_bytes() == (second / 'iterates.csv').read_bytes()
    assert (first / 'curve.csv').read_bytes() == (second / 'curve.csv').read_bytes()
    assert (first / 'meta.txt').read_bytes() == (second / 'meta.txt').read_bytes()


def test_rod_curve_layout(tmp_path):
    out = tmp_path / 'rod'
    assert main(['rod', '--n', '4', '--max-outer', '1', '--out-dir', str(out)]) == 3
    assert _header(out / 'curve.csv') == ROD_COLUMNS
    table = np.loadtxt(out / 'curve.csv', delimiter=',', skiprows=1)
    assert table.shape == (6, 10)
    np.testing.assert_allclose(np.linalg.norm(table[:, 4:7], axis=1), 1.0, atol=1e-14)
    assert 'result_status=MaxIterations' in (out / 'meta.txt').read_text(encoding='utf-8').splitlines()


def test_obstacle_without_contact(tmp_path):
    out = tmp_path / 'obs'
    assert main(['obstacle', '--n', '10', '--h-ref', '0.01', '--out-dir', str(out)]) == 0
    stages = out / 'stages.csv'
    assert stages.read_text(encoding='utf-8').splitlines() == [','.join(STAGE_COLUMNS)]
    assert 'result_stages=0' in (out / 'meta.txt').read_text(encoding='utf-8').splitlines()


# Exit codes

def test_damping_failure_exit_code(tmp_path):
    assert main(['rod', '--n', '10', '--alpha-fail', '0.99', '--out-dir', str(tmp_path)]) == 2


def test_max_iterations_exit_code(tmp_path):
    assert main(['geodesic-force', '--n', '10', '--max-outer', '1', '--out-dir', str(tmp_path)]) == 3


@pytest.mark.parametrize('argv', [
    ['spiral'],
    [],
    ['rod', '--n', 'many'],
    ['rod', '--n', '0'],
    ['obstacle', '--h-ref', '1.5'],
    ['geodesic-force', '--theta-des', '0.95'],
])
def test_config_errors_exit_4(tmp_path, capsys, argv):
    assert main(argv + ['--out-dir', str(tmp_path)]) == 4
    assert 'Config error' in capsys.readouterr().out


def test_unknown_config_key_exit_4(tmp_path):
    path = _write(tmp_path / 'bad.txt', "problem=rod\nwobble=1\n")
    assert main(['--config', path, '--out-dir', str(tmp_path)]) == 4


def test_unwritable_out_dir_exit_4(tmp_path):
    blocker = tmp_path / 'file'
    blocker.write_text('x', encoding='utf-8')
    assert main(['geodesic-force', '--n', '4', '--out-dir', str(blocker)]) == 4


def test_solver_error_names_stage(tmp_path, capsys):
    path = _write(tmp_path / 'pole.txt', "problem=geodesic-force\ngamma0=0,0,1\nn=4\n")
    assert main(['--config', path, '--out-dir', str(tmp_path / 'out')]) == 1
    out = capsys.readouterr().out
    assert 'PoleSingularity during assemble' in out
