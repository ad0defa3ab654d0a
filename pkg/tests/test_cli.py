from coefstab.cli import EXIT_ERROR, EXIT_FAIL, EXIT_PASS, SUBCOMMANDS, \
        build_parser, main
import json
import os
import pandas as pd
import pytest


def resource(name):
    return os.path.dirname(__file__) + '/resources/' + name


def run(subcommand, config, out, *extra):
    return main([subcommand, '--config', resource(config), '--out', str(out),
                 *extra])


def load(path):
    with open(path) as f:
        return json.load(f)


def test_parser():
    args = build_parser().parse_args([
        'stability', '--config', 'a.json', '--set', 'grid.n_cells=32',
        '--set', 'chain.s=inf', '--workers', '2', '--timing'])

    assert args.subcommand == 'stability'
    assert args.overrides == ['grid.n_cells=32', 'chain.s=inf']
    assert args.workers == 2
    assert args.timing
    assert not args.verbose
    assert args.out == '.'

    with pytest.raises(SystemExit):
        build_parser().parse_args(['invert', '--config', 'a.json'])

    assert set(SUBCOMMANDS) == {'solve', 'check-admissible',
                                'verify-identity', 'geometry', 'stability',
                                'reconstruct'}


def test_solve(tmp_path):
    status = run('solve', 'cosine_gamma.json', tmp_path,
                 '--set', 'grid.n_cells=16')
    assert status == EXIT_PASS

    report = load(tmp_path / 'cosine-gamma-solve.json')
    assert set(report['solves']) == {'problem1', 'problem2'}
    assert report['solves']['problem1']['solver'] == 'splu'
    assert report['config']['grid']['n_cells'] == 16
    assert 'timings' not in report

    u1 = pd.read_csv(tmp_path / 'u1.csv')
    assert list(u1.columns) == ['x', 'y', 're', 'im']
    assert len(u1) == 17 * 17
    assert (tmp_path / 'u2.csv').exists()

    summary = pd.read_csv(tmp_path / 'summary.csv')
    assert list(summary['id']) == ['cosine-gamma-solve']


def test_solve_with_timing(tmp_path):
    run('solve', 'cosine_gamma.json', tmp_path, '--set', 'grid.n_cells=16',
        '--timing')

    report = load(tmp_path / 'cosine-gamma-solve.json')
    assert 'solve' in report['timings']


def test_resonance_is_an_error(tmp_path, capsys):
    assert run('solve', 'resonant.json', tmp_path) == EXIT_ERROR
    assert 'error:' in capsys.readouterr().err
    assert not (tmp_path / 'resonant-solve.json').exists()


def test_bad_config(tmp_path):
    assert main(['solve', '--config', str(tmp_path / 'missing.json'),
                 '--out', str(tmp_path)]) == EXIT_ERROR

    assert run('solve', 'cosine_gamma.json', tmp_path,
               '--set', 'grid.cells=4') == EXIT_ERROR

    # problem2 is required for the admissibility check
    assert run('check-admissible', 'resonant.json', tmp_path) == EXIT_ERROR


def test_check_admissible(tmp_path):
    status = run('check-admissible', 'rotating_gamma.json', tmp_path)
    assert status == EXIT_FAIL

    report = load(tmp_path / 'rotating-gamma-check-admissible.json')
    assert report['status'] == 'not_admissible'
    assert not report['admissible']

    status = run('check-admissible', 'cosine_gamma.json', tmp_path)
    assert status == EXIT_PASS
    report = load(tmp_path / 'cosine-gamma-check-admissible.json')
    assert report['status'] == 'admissible'

    summary = pd.read_csv(tmp_path / 'summary.csv')
    assert list(summary['verdict']) == [False, True]


def test_verify_identity(tmp_path):
    status = run('verify-identity', 'plane_wave_rho.json', tmp_path,
                 '--set', 'grid.n_cells=32')
    assert status in (EXIT_PASS, EXIT_FAIL)

    report = load(tmp_path / 'plane-wave-rho-verify-identity.json')
    assert report['mode'] == 'rho'
    assert {'identity', 'estimate', 'identity_pass',
            'estimate_pass'} <= set(report)
    assert (tmp_path / 'u1.csv').exists()


def test_geometry(tmp_path):
    status = run('geometry', 'cosine_gamma.json', tmp_path)
    assert status in (EXIT_PASS, EXIT_FAIL)

    report = load(tmp_path / 'cosine-gamma-geometry.json')
    assert not report['noncritical']
    points = [s for s in report['strata']['strata'] if s['kind'] == 'point']
    assert len(points) == 1
    assert report['tube'] is not None
    assert (tmp_path / 'tube.csv').exists()
    assert (tmp_path / 'level_profile.csv').exists()


def test_stability(tmp_path):
    status = run('stability', 'plane_wave_rho.json', tmp_path)
    assert status == EXIT_PASS

    report = load(tmp_path / 'plane-wave-rho-stability.json')
    assert report['verdict'] is True
    assert report['certificate']['mode'] == 'noncritical'

    summary = pd.read_csv(tmp_path / 'summary.csv')
    assert list(summary['id']) == ['plane-wave-rho-stability']


def test_reconstruct(tmp_path):
    status = run('reconstruct', 'plane_wave_rho.json', tmp_path,
                 '--set', 'grid.n_cells=32')
    assert status == EXIT_PASS

    report = load(tmp_path / 'plane-wave-rho-reconstruct.json')
    assert report['relative_error'] <= report['tolerance']
    assert report['reconstruction']['method'] == 'rho'
    assert (tmp_path / 'rho_reconstructed.csv').exists()


def test_stability_identical_coefficients(tmp_path):
    status = run('stability', 'cosine_gamma.json', tmp_path,
                 '--set', 'problem2.gamma=1.0', '--set', 'grid.n_cells=32',
                 '--set', 'sectors.h_band=0.2',
                 '--set', 'family.amplitudes=[]')
    assert status == EXIT_PASS

    report = load(tmp_path / 'cosine-gamma-stability.json')
    assert report['lhs'] == 0
    assert report['verdict'] is True


def test_stability_worker_error(tmp_path, capsys):
    status = run('stability', 'cosine_gamma.json', tmp_path,
                 '--set', 'grid.n_cells=32', '--workers', '2')
    assert status == EXIT_ERROR

    err = capsys.readouterr().err
    assert 'error: [identity] ResolutionError: h_band=0.1' in err
    assert not (tmp_path / 'cosine-gamma-stability.json').exists()


def test_reports_are_reproducible(tmp_path):
    first, second = tmp_path / 'first', tmp_path / 'second'

    for out in (first, second):
        run('verify-identity', 'plane_wave_rho.json', out,
            '--set', 'grid.n_cells=32')

    name = 'plane-wave-rho-verify-identity.json'
    assert (first / name).read_bytes() == (second / name).read_bytes()
    assert (first / 'u1.csv').read_bytes() == (second / 'u1.csv').read_bytes()
