from coefstab.config import apply_override, build_problem, load_config, \
        parse_config, solver_options
from coefstab.errors import ConfigError, RangeError
import codecs
import math
import os
import pytest


def resource(name):
    return os.path.dirname(__file__) + '/resources/' + name


def minimal(**kwargs):
    data = {'problem1': {'g': 'x1'}}
    data.update(kwargs)
    return data


def test_defaults():
    config = load_config(minimal())

    assert config['id'] == 'experiment'
    assert config['mode'] == 'gamma'
    assert config['grid']['n_cells'] == 128
    assert config['sectors']['sigma'] == pytest.approx(0.1 * math.pi)
    assert config['problem1'] == dict(gamma=1.0, rho=1.0, omega2=0.0, A=None,
                                      g='x1')
    assert 'problem2' not in config


def test_problem2_inherits():
    config = parse_config(resource('cosine_gamma.json'))

    assert config['problem2']['g'] == 'cos(x1)*cos(x2)'
    assert config['problem2']['omega2'] == 2.0
    assert config['problem2']['gamma'] == '1 + 0.2*x1*x2'
    assert config['tube']['tau_z'] == 0.1
    assert config['tube']['bins'] == 20


def test_overrides():
    config = load_config(minimal(), overrides=[
        'grid.n_cells=64',
        'chain.s=inf',
        'id=run-7',
        'problem1.omega2=1.5',
        'tube.etas=[0.1, 0.2, 0.3, 0.4]',
    ])

    assert config['grid']['n_cells'] == 64
    assert math.isinf(config['chain']['s'])
    assert config['id'] == 'run-7'
    assert config['problem1']['omega2'] == 1.5
    assert config['tube']['etas'] == [0.1, 0.2, 0.3, 0.4]


@pytest.mark.parametrize('override', [
    'grid.cells=4',
    'grid=4',
    'nothing=1',
    'problem1.beta=1',
    'no-equals-sign',
])
def test_bad_override(override):
    with pytest.raises(ConfigError):
        apply_override(load_config(minimal()), override)


@pytest.mark.parametrize('data', [
    {'grid': {'cells': 4}},
    {'color': 'red'},
    {'grid': 4},
    {'problem1': {'g': 'x1', 'beta': 2}},
    {'mode': 'sigma'},
    {'reconstruct': {'direction': 'x1'}},
])
def test_unknown_or_invalid_keys(data):
    base = minimal()
    base.update(data)

    with pytest.raises(ConfigError):
        load_config(base)


def test_unknown_key_is_reported():
    with pytest.raises(ConfigError) as info:
        load_config(minimal(grid={'cells': 4}))

    assert info.value.key == 'grid.cells'


@pytest.mark.parametrize('data, key', [
    ({'sectors': {'sigma': 1.0}}, 'sectors.sigma'),
    ({'chain': {'s': 2}}, 'chain.s'),
    ({'grid': {'n_cells': 1}}, 'grid.n_cells'),
    ({'sectors': {'h_band': 0}}, 'sectors.h_band'),
])
def test_ranges(data, key):
    with pytest.raises(RangeError) as info:
        load_config(minimal(**data))

    assert info.value.key == key


def test_required_sections():
    with pytest.raises(ConfigError):
        load_config({})

    with pytest.raises(ConfigError):
        load_config(minimal(), required=('problem1', 'problem2'))

    with pytest.raises(ConfigError):
        load_config({'problem1': {'gamma': 2}})

    # sections are optional when nothing requires them
    assert 'problem1' not in load_config({}, required=())


def test_invalid_problem():
    with pytest.raises(ConfigError) as info:
        load_config({'problem1': {'g': 'x1', 'gamma': -1}})
    assert info.value.key == 'problem1'

    with pytest.raises(ConfigError):
        load_config({'problem1': {'g': 'x1', 'gamma': 'pi'}})

    with pytest.raises(ConfigError):
        load_config({'problem1': {'g': 'x1', 'A': [[1, 0]]}})


def test_parse_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / 'missing.json'))

    path = tmp_path / 'broken.json'
    path.write_text('{"problem1": ')
    with pytest.raises(ConfigError):
        parse_config(str(path))


def test_parse_config_with_byte_order_mark(tmp_path):
    path = tmp_path / 'bom.json'
    path.write_bytes(codecs.BOM_UTF8 +
                     b'{"id": "bom", "problem1": {"g": "x1"}}')

    assert parse_config(str(path))['id'] == 'bom'


def test_build_problem_amplitude():
    config = parse_config(resource('cosine_gamma.json'))
    spec = build_problem(config, 'problem2', amplitude=0.5)

    # gamma1 + 0.5 (gamma2 - gamma1) at (1, 1)
    value = spec.gamma.evaluate_at(1.0, 1.0)
    assert abs(value - 1.1) < 1e-12

    rho = parse_config(resource('plane_wave_rho.json'))
    spec = build_problem(rho, 'problem2', amplitude=0.5)
    assert abs(spec.rho.evaluate_at(1.0, 1.0) - 1.1) < 1e-12
    assert abs(spec.gamma.evaluate_at(1.0, 1.0) - 1) < 1e-12


def test_solver_options():
    options = solver_options(load_config(minimal()))

    assert options == dict(tol=1e-10, direct_max_cells=256,
                           resonance_tol=1e-2)
