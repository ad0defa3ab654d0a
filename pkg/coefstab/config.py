from typing import Iterable, Optional, Sequence
import copy
import json
import logging
import math

from .coefficients import CoefficientField, ProblemSpec, identity_matrix
from .common import decode_text
from .errors import CoefstabError, ConfigError, RangeError
from .types import Domain, Grid

MODES = ('gamma', 'rho')

PROBLEM_KEYS = ('gamma', 'rho', 'omega2', 'g', 'A')

PROBLEM_DEFAULTS = dict(gamma=1.0, rho=1.0, omega2=0.0, A=None)

DEFAULTS = {
    'id': 'experiment',
    'mode': 'gamma',
    'domain': {
        'kind': 'rectangle',
        'x_extent': 1.0,
        'y_extent': 1.0,
        'center': [0.0, 0.0],
        'radius': 1.0,
    },
    'grid': {
        'n_cells': 128,
    },
    'sectors': {
        'sigma': 0.1 * math.pi,
        'h_band': 0.1,
    },
    'tube': {
        'etas': [0.1, 0.2, 0.4, 0.6, 0.8, 1.0],
        'tau_z': None,
        'R': None,
        'w_margin': 0.05,
        'v_margin': 0.1,
        'd_margin': 0.15,
        'fit_radius': 0.15,
        'quantile': 0.01,
        'bins': 20,
    },
    'chain': {
        's': 4.0,
    },
    'solver': {
        'tol': 1e-10,
        'direct_max_cells': 256,
        'resonance_tol': 1e-2,
    },
    'identity': {
        'tolerance': 1e-2,
    },
    'reconstruct': {
        'u_floor': 0.1,
        'grad_floor': 0.1,
        'direction': '+x1',
        'gamma_boundary': None,
        'rho_tolerance': 1e-3,
        'gamma_tolerance': 0.05,
    },
    'family': {
        'amplitudes': [],
    },
}

SECTIONS = tuple(DEFAULTS) + ('problem1', 'problem2')


def _merge(defaults: dict, data: dict, prefix: str = '') -> dict:
    result = copy.deepcopy(defaults)

    for key, value in data.items():
        dotted = prefix + key
        if key not in defaults:
            raise ConfigError(f'unknown config key "{dotted}"', key=dotted)

        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f'"{dotted}" must be an object', key=dotted)
            result[key] = _merge(defaults[key], value, dotted + '.')
        else:
            result[key] = copy.deepcopy(value)

    return result


def _check_problem(name: str, data) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f'"{name}" must be an object', key=name)

    for key in data:
        if key not in PROBLEM_KEYS:
            raise ConfigError(f'unknown config key "{name}.{key}"',
                              key=f'{name}.{key}')

    return copy.deepcopy(data)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def apply_override(config: dict, override: str) -> dict:
    """ Apply a `dotted.key=value` override in place. The value is parsed as
    JSON when possible and kept as a string otherwise.

    :raises ConfigError: for a malformed override or an unknown key.
    """
    if '=' not in override:
        raise ConfigError(f'override must have the form key=value, got '
                          f'{override!r}')

    key, text = override.split('=', 1)
    key = key.strip()
    path = key.split('.')
    value = _parse_value(text)

    if path[0] not in SECTIONS:
        raise ConfigError(f'unknown config key "{key}"', key=key)

    if path[0] in ('problem1', 'problem2'):
        if len(path) != 2 or path[1] not in PROBLEM_KEYS:
            raise ConfigError(f'unknown config key "{key}"', key=key)
        config.setdefault(path[0], {})[path[1]] = value
        return config

    node, defaults = config, DEFAULTS
    for i, part in enumerate(path):
        if not isinstance(defaults, dict) or part not in defaults:
            raise ConfigError(f'unknown config key "{key}"', key=key)

        if i == len(path) - 1:
            if isinstance(defaults[part], dict):
                raise ConfigError(f'cannot override section "{key}"',
                                  key=key)
            node[part] = value
        else:
            node, defaults = node[part], defaults[part]

    return config


def _check_ranges(config: dict):
    sigma = config['sectors']['sigma']
    if not isinstance(sigma, (int, float)) or not 0 < sigma <= math.pi / 4:
        raise RangeError(f'sectors.sigma must lie in (0, pi/4], got {sigma}',
                         key='sectors.sigma')

    s = config['chain']['s']
    if isinstance(s, str) and s.lower() in ('inf', 'infinity'):
        s = config['chain']['s'] = math.inf
    if not isinstance(s, (int, float)) or not s > 2:
        raise RangeError(f'chain.s must exceed the dimension 2, got {s}',
                         key='chain.s')

    n_cells = config['grid']['n_cells']
    if not isinstance(n_cells, int) or isinstance(n_cells, bool) or \
            n_cells < 2:
        raise RangeError(f'grid.n_cells must be an integer >= 2, got '
                         f'{n_cells}', key='grid.n_cells')

    if config['mode'] not in MODES:
        raise ConfigError(f'mode must be one of {MODES}, got '
                          f'{config["mode"]!r}', key='mode')

    h_band = config['sectors']['h_band']
    if not isinstance(h_band, (int, float)) or not h_band > 0:
        raise RangeError(f'sectors.h_band must be positive, got {h_band}',
                         key='sectors.h_band')

    if config['reconstruct']['direction'] not in ('+x1', '-x1', '+x2', '-x2'):
        raise ConfigError('reconstruct.direction must be one of +x1, -x1, '
                          '+x2, -x2', key='reconstruct.direction')


def load_config(data: dict, overrides: Iterable[str] = (),
                required: Sequence[str] = ('problem1',)) -> dict:
    """ Merge a config object over `DEFAULTS`, apply overrides and validate.

    `problem2` inherits every key it omits from `problem1`. The problem
    coefficients are pre-validated on a coarse grid.

    :param required: Sections which must be present.
    :raises ConfigError: for unknown keys or missing sections.
    :raises RangeError: for `sigma` outside `(0, pi/4]` or `s <= 2`.
    """
    if not isinstance(data, dict):
        raise ConfigError('config must be a JSON object')

    data = dict(data)
    problems = {name: data.pop(name) for name in ('problem1', 'problem2')
                if name in data}
    config = _merge(DEFAULTS, data)

    for name, value in problems.items():
        if value is not None:
            config[name] = _check_problem(name, value)

    for override in overrides:
        apply_override(config, override)

    for section in required:
        if section not in config:
            raise ConfigError(f'missing section "{section}"', key=section)

    if 'problem1' in config:
        problem1 = dict(PROBLEM_DEFAULTS)
        problem1.update(config['problem1'])
        if 'g' not in problem1:
            raise ConfigError('missing key "problem1.g"', key='problem1.g')
        config['problem1'] = problem1

        if 'problem2' in config:
            problem2 = dict(problem1)
            problem2.update(config['problem2'])
            config['problem2'] = problem2

    _check_ranges(config)

    if 'problem1' in config:
        grid = Grid(build_domain(config), 16)
        for name in ('problem1', 'problem2'):
            if name in config:
                try:
                    build_problem(config, name).validate(grid,
                                                         check_bounds=False)
                except ConfigError:
                    raise
                except CoefstabError as e:
                    raise ConfigError(f'{name}: {e}', key=name) from e

    return config


def parse_config(path, overrides: Iterable[str] = (),
                 required: Sequence[str] = ('problem1',)) -> dict:
    """ Read a JSON config file and validate it with `load_config`.

    :raises ConfigError: if the file cannot be read or is not valid JSON.
    """
    try:
        with open(path, 'rb') as f:
            data = json.loads(decode_text(f.read()))
    except OSError as e:
        raise ConfigError(f'cannot read config {path}: {e}') from e
    except ValueError as e:
        raise ConfigError(f'{path}: invalid JSON: {e}') from e

    config = load_config(data, overrides, required)
    logging.info(f'loaded config {config["id"]!r} from {path}')
    return config


def build_domain(config: dict) -> Domain:
    data = config['domain']
    try:
        return Domain.from_dict(data)
    except CoefstabError as e:
        raise ConfigError(f'domain: {e}', key='domain') from e


def build_field(value, key: str, bounds):
    try:
        return CoefficientField.parse(value, bounds=bounds)
    except CoefstabError as e:
        raise ConfigError(f'{key}: {e}', key=key) from e


def build_matrix(value, key: str, bounds):
    if value is None:
        return identity_matrix()

    if not isinstance(value, list) or len(value) != 2 or \
            any(not isinstance(row, list) or len(row) != 2 for row in value):
        raise ConfigError(f'{key} must be a 2x2 nested list', key=key)

    return tuple(tuple(build_field(v, f'{key}[{i}][{j}]', bounds)
                       for j, v in enumerate(row))
                 for i, row in enumerate(value))


def build_problem(config: dict, name: str = 'problem1',
                  amplitude: Optional[float] = None) -> ProblemSpec:
    """ Build the `ProblemSpec` of section `name`.

    With an `amplitude` t, the perturbed coefficient of `problem2` (gamma in
    gamma mode, rho in rho mode) becomes `c1 + t (c2 - c1)`.
    """
    if name not in config:
        raise ConfigError(f'missing section "{name}"', key=name)

    data = config[name]
    bounds = build_domain(config).bounds
    gamma = build_field(data['gamma'], f'{name}.gamma', bounds)
    rho = build_field(data['rho'], f'{name}.rho', bounds)
    g = build_field(data['g'], f'{name}.g', bounds)
    A = build_matrix(data.get('A'), f'{name}.A', bounds)

    try:
        omega2 = float(data['omega2'])
    except (TypeError, ValueError) as e:
        raise ConfigError(f'{name}.omega2 must be a number',
                          key=f'{name}.omega2') from e

    if amplitude is not None and name == 'problem2':
        base = config['problem1']
        if config['mode'] == 'gamma':
            gamma1 = build_field(base['gamma'], 'problem1.gamma', bounds)
            gamma = gamma1 + amplitude * (gamma - gamma1)
        else:
            rho1 = build_field(base['rho'], 'problem1.rho', bounds)
            rho = rho1 + amplitude * (rho - rho1)

    return ProblemSpec(gamma, rho, omega2, g, A, config['sectors']['sigma'])


def solver_options(config: dict) -> dict:
    options = config['solver']
    return dict(tol=float(options['tol']),
                direct_max_cells=int(options['direct_max_cells']),
                resonance_tol=float(options['resonance_tol']))
