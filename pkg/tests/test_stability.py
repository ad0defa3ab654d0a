from coefstab.coefficients import identity_matrix
from coefstab.config import DEFAULTS, parse_config
from coefstab.errors import ChainError, ExponentError, NotAdmissibleError, \
        PreconditionError, ResolutionError, StageError
from coefstab.grid import build_grid, integrate
from coefstab.geometry import nested_regions
from coefstab.identity import energy_density
from coefstab.stability import critical_geometry, fit_gn_constant, \
        gn_exponents, gn_ratio, gn_test_family, holder_certificate, \
        optimize_eta, run_experiment, run_family, split_bound, split_value
from coefstab.types import Domain, GridField
import math
import numpy as np
import os
import pytest


def resource(name):
    return os.path.dirname(__file__) + '/resources/' + name


def unit_setup(n=32):
    grid = build_grid(Domain.rectangle(1, 1), n)
    psi = grid.evaluate(lambda x, y: 0.2 * x * y)
    regions = nested_regions(grid)
    return grid, psi, regions


def test_split_value():
    assert split_value(2, 3, 1, 0.5) == 2 * 0.5 + 3 / 0.5


def test_optimize_eta():
    assert optimize_eta(1, 1, 1) == (1.0, 2.0)

    eta, value = optimize_eta(4, 1, 1)
    assert eta == pytest.approx(0.5)
    assert value == pytest.approx(4.0)

    # the minimum is below the values on either side
    assert value <= split_value(4, 1, 1, 0.45)
    assert value <= split_value(4, 1, 1, 0.55)

    assert optimize_eta(1, 0, 2) == (0.0, 0.0)
    assert optimize_eta(0, 3, 2) == (1.0, 3.0)

    with pytest.raises(PreconditionError):
        optimize_eta(-1, 1, 1)

    with pytest.raises(PreconditionError):
        optimize_eta(1, 1, 0)


def test_optimize_eta_against_grid_search():
    assert optimize_eta(2, 1, 1) == pytest.approx((0.70711, 2.82843),
                                                  abs=1e-5)

    rng = np.random.default_rng(3)
    etas = np.linspace(1e-4, 1, 10 ** 4)

    for _ in range(100):
        a, b = rng.uniform(0.1, 10, size=2)
        r = rng.uniform(0.5, 5)
        eta, value = optimize_eta(a, b, r)
        searched = a * etas + b / etas ** r

        assert 0 < eta <= 1
        assert value == pytest.approx(split_value(a, b, r, eta))
        assert value <= np.min(searched) * (1 + 1e-12)
        assert np.min(searched) <= value * (1 + 1e-4)


def test_gn_exponents():
    assert gn_exponents(2, 4) == pytest.approx((0.8, 0.2))
    assert gn_exponents(2, math.inf) == pytest.approx((2 / 3, 1 / 3))

    with pytest.raises(ExponentError):
        gn_exponents(2, 2)

    # theta decreases to 2/3 as s grows
    thetas = [gn_exponents(2, s)[0]
              for s in (2.5, 3, 4, 8, 16, 100, math.inf)]
    assert np.all(np.diff(thetas) < 0)
    assert thetas[-1] == pytest.approx(2 / 3)


def test_gn_constant():
    grid, psi, regions = unit_setup()
    V = regions['V']

    family = gn_test_family(grid)
    assert len(family) == 20

    C = fit_gn_constant(grid, V, 4.0)
    assert C == max(gn_ratio(f, V, 4.0) for f in family)

    # bilinear perturbations and their squares are covered by the fixed family
    squared = GridField(grid, np.abs(psi.values) ** 2)
    assert C >= gn_ratio(psi, V, 4.0) * (1 - 1e-12)
    assert C >= gn_ratio(squared, V, 4.0) * (1 - 1e-12)

    zero = GridField(grid, np.zeros(grid.shape))
    assert gn_ratio(zero, V, 4.0) == 0


def test_noncritical_certificate():
    grid, psi, regions = unit_setup()
    density = GridField(grid, np.ones(grid.shape))
    V, d = regions['V'], regions['d']
    weighted = float(integrate(psi.abs(), V))

    cert = holder_certificate(psi, density, V, d, None, 4.0, 1.0, weighted)

    assert cert.mode == 'noncritical'
    assert cert.alpha == pytest.approx(0.2)
    assert cert.C_eff == 1
    assert cert.split_min == pytest.approx(weighted)
    assert cert.lhs == pytest.approx(psi.max_abs(d.mask))
    assert cert.verdict
    assert cert.verdict_analytic

    # a right-hand side far too small for lhs is detected
    cert = holder_certificate(psi, density, V, d, None, 4.0, 1.0, 1e-30)
    assert not cert.verdict


def test_squared_certificate():
    grid, psi, regions = unit_setup()
    density = GridField(grid, np.ones(grid.shape))
    V, d = regions['V'], regions['d']
    weighted = float(integrate(GridField(grid, psi.values ** 2), V))

    cert = holder_certificate(psi, density, V, d, None, 4.0, 1.0, weighted,
                              squared=True)

    assert cert.squared
    assert cert.alpha == pytest.approx(0.1)
    assert cert.verdict


def test_certificate_without_density():
    grid, psi, regions = unit_setup()
    density = GridField(grid, np.zeros(grid.shape))

    with pytest.raises(ChainError):
        holder_certificate(psi, density, regions['V'], regions['d'], None,
                           4.0, 1.0, 1.0)


def test_tube_certificate():
    grid = build_grid(Domain.rectangle(2, 2), 48)
    u = grid.evaluate(lambda x, y: np.cos(x) * np.cos(y))
    psi = grid.evaluate(lambda x, y: 0.2 * x * y)
    regions = nested_regions(grid)
    density = energy_density(u, identity_matrix())

    options = dict(DEFAULTS['tube'], tau_z=0.1)
    critical, strata, tube = critical_geometry(
            'gamma', u, identity_matrix(), options, regions['V'])

    assert len(strata.points) == 1
    assert tube.lojasiewicz is not None

    value = split_bound(psi, tube, 0.5, regions['V'], density)
    assert value >= float(integrate(psi.abs(), regions['V']))

    with pytest.raises(PreconditionError):
        split_bound(psi, tube, 1.5, regions['V'], density)

    weighted = float(integrate(GridField(grid, psi.values *
                                         density.values), regions['V']))
    cert = holder_certificate(psi, density, regions['V'], regions['d'],
                              tube, 4.0, 1.0, weighted)

    assert cert.mode == 'tube'
    assert cert.alpha == pytest.approx(0.2 / (tube.r + 1))
    theta = 0.8
    assert cert.alpha_boundary == \
        pytest.approx((1 - theta) / (1 + tube.r * theta))
    assert cert.chain_consistency < 1e-9
    assert 0 < cert.eta <= 1
    assert cert.verdict


def test_gamma_experiment():
    config = parse_config(resource('cosine_gamma.json'))
    report = run_experiment(config)

    assert report.mode == 'gamma'
    assert report.certificate.mode == 'tube'
    assert report.verdict
    assert report.lhs == pytest.approx(report.norms['psi_linf_d'])
    assert report.rhs == pytest.approx(report.norms['psi_linf_boundary'] +
                                       report.norms['w21'])
    assert report.sectors['admissible']

    # the identity uses the sector holding the positive values of psi
    assert report.identity['sector'] == len(report.sectors['angles']) - 1
    assert abs(report.identity['lhs']) > 1e-6
    assert report.estimate['uncovered'] == 0
    assert report.estimate['beta_margin'] <= 0

    assert set(report.tables) == {'sectors', 'tube'}
    assert set(report.timings) == {'grid', 'solve', 'sectors', 'identity',
                                   'estimate', 'geometry', 'chain'}

    data = report.to_dict()
    assert data['id'] == 'cosine-gamma'
    assert data['solves']['problem1']['solver'] == 'splu'


def test_rho_experiment():
    config = parse_config(resource('plane_wave_rho.json'))
    report = run_experiment(config)

    assert report.mode == 'rho'
    assert report.certificate.mode == 'noncritical'
    assert report.certificate.squared
    assert report.alpha == pytest.approx(0.1)
    assert report.sectors is None
    assert report.tube is None
    assert 'psi_linf_boundary' not in report.norms
    assert report.rhs == pytest.approx(report.norms['w11'])
    assert report.identity['relative'] < 1e-2
    assert report.verdict


def test_not_admissible_experiment():
    config = parse_config(resource('rotating_gamma.json'))

    with pytest.raises(StageError) as info:
        run_experiment(config)

    assert info.value.stage == 'sectors'
    assert isinstance(info.value.cause, NotAdmissibleError)
    assert str(info.value).startswith('[sectors] NotAdmissibleError')


def test_family():
    config = parse_config(resource('cosine_gamma.json'),
                          overrides=['grid.n_cells=32',
                                     'sectors.h_band=0.2'])
    family = run_family(config, amplitudes=[1.0, 0.5])

    assert [r.amplitude for r in family.reports] == [0.5, 1.0]
    assert family.C_calibrated == family.reports[-1].C_final
    assert len(family.verdicts) == 2
    assert family.verdicts[-1]
    assert list(family.table.columns) == ['amplitude', 'lhs', 'rhs', 'alpha',
                                          'C_final', 'verdict']

    data = family.to_dict()
    assert len(data['members']) == 2

    with pytest.raises(PreconditionError):
        run_family(config, amplitudes=[])


def test_family_worker_error():
    # h_band=0.1 does not exceed twice the grid spacing 0.0625
    config = parse_config(resource('cosine_gamma.json'),
                          overrides=['grid.n_cells=32'])

    with pytest.raises(StageError) as info:
        run_family(config, amplitudes=[0.5, 1.0], workers=2)

    assert info.value.stage == 'identity'
    assert isinstance(info.value.cause, ResolutionError)


def test_family_of_small_amplitudes():
    config = parse_config(resource('cosine_gamma.json'))
    family = run_family(config, amplitudes=[1e-1, 1e-3, 1e-2])

    assert [r.amplitude for r in family.reports] == [1e-3, 1e-2, 1e-1]
    assert family.C_calibrated == family.reports[-1].C_final
    assert family.verdict
    assert family.monotone

    # lhs and rhs both scale linearly with the amplitude
    assert family.slope == pytest.approx(1, abs=0.1)
    assert family.slope_verdict
