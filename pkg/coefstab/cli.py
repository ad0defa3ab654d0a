from dataclasses import dataclass, field
from typing import Dict, List, Optional
import argparse
import logging
import os
import sys

import pandas as pd

from .config import build_domain, build_field, build_problem, \
        parse_config, solver_options
from .errors import CoefstabError
from .geometry import level_measure_profile, nested_regions
from .grid import build_grid
from .identity import fundamental_equality_terms
from .reconstruct import reconstruct_gamma_march, reconstruct_rho
from .report import append_summary, ensure_directory, write_field, \
        write_report, write_table
from .sectors import sector_decompose
from .solver import pde_residual, solve_forward
from .stability import critical_geometry, estimate_check, identity_check, \
        perturbation, run_experiment, run_family, stage

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_FAIL = 2

LEVEL_COUNT = 9


@dataclass
class Outcome:
    """ Result of one subcommand: the report payload, the overall verdict and
    the tables and fields to write next to the report. """
    report: dict
    verdict: bool
    summary: List[dict] = field(default_factory=list)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    fields: dict = field(default_factory=dict)


def _setup(config: dict, timings: dict):
    with stage('grid', timings):
        grid = build_grid(build_domain(config), config['grid']['n_cells'])
    return grid


def _solve(config: dict, grid, names, timings: dict):
    results = {}
    with stage('solve', timings):
        options = solver_options(config)
        for name in names:
            spec = build_problem(config, name)
            u, report = solve_forward(spec, grid, **options)
            results[name] = (spec, u, report)
    return results


def _summary(config: dict, subcommand: str, verdict: bool, **values) -> dict:
    row = dict(id=f'{config["id"]}-{subcommand}', verdict=verdict)
    row.update(values)
    return row


def cmd_solve(config: dict, args) -> Outcome:
    timings = {}
    grid = _setup(config, timings)
    names = [n for n in ('problem1', 'problem2') if n in config]
    results = _solve(config, grid, names, timings)

    report = dict(id=config['id'], subcommand='solve', config=config,
                  timings=timings, solves={})
    fields = {}

    for i, name in enumerate(names, 1):
        spec, u, solve_report = results[name]
        report['solves'][name] = dict(solve_report.to_dict(),
                                      pde_residual=pde_residual(u, spec,
                                                                grid))
        fields[f'u{i}'] = u

    return Outcome(report, True, [_summary(config, 'solve', True)],
                   fields=fields)


def cmd_check_admissible(config: dict, args) -> Outcome:
    timings = {}
    grid = _setup(config, timings)
    spec1 = build_problem(config, 'problem1')
    spec2 = build_problem(config, 'problem2')

    with stage('sectors', timings):
        psi = perturbation('gamma', spec1, spec2, grid)
        sectors = sector_decompose(psi, config['sectors']['sigma'], grid)

    report = dict(id=config['id'], subcommand='check-admissible',
                  config=config, timings=timings,
                  admissible=sectors.admissible,
                  status='admissible' if sectors.admissible
                  else 'not_admissible',
                  sectors=sectors.to_dict())

    tables = {}
    if sectors.measures is not None:
        tables['sectors'] = sectors.measures

    verdict = bool(sectors.admissible)
    return Outcome(report, verdict,
                   [_summary(config, 'check-admissible', verdict)], tables)


def cmd_verify_identity(config: dict, args) -> Outcome:
    timings = {}
    mode = config['mode']
    grid = _setup(config, timings)
    results = _solve(config, grid, ('problem1', 'problem2'), timings)
    (spec1, u1, _), (spec2, u2, _) = results['problem1'], results['problem2']
    h_band = config['sectors']['h_band']
    regions = nested_regions(grid, config['tube']['w_margin'],
                             config['tube']['v_margin'],
                             config['tube']['d_margin'])
    sectors = None

    with stage('sectors', timings):
        psi = perturbation(mode, spec1, spec2, grid)
        if mode == 'gamma':
            sectors = sector_decompose(psi, config['sectors']['sigma'], grid)

    with stage('identity', timings):
        identity, tau = identity_check(mode, u1, u2, spec1, spec2, psi,
                                       sectors, h_band, regions['V'].depth)

    with stage('estimate', timings):
        terms = estimate_check(mode, u1, u2, spec1, spec2, psi, sectors, tau)

    tables = {}
    if mode == 'gamma':
        bands = [b for b in (2 * h_band, h_band, 0.5 * h_band)
                 if b > 2 * grid.h]
        tables['bands'] = fundamental_equality_terms(
                u1, u2, psi, spec2.gamma, spec2.rho, spec1.A, spec1.omega2,
                sectors, bands, grid)

    tolerance = config['identity']['tolerance']
    identity_ok = identity.relative <= tolerance
    verdict = bool(identity_ok and terms.report.verdict)

    report = dict(id=config['id'], subcommand='verify-identity', mode=mode,
                  config=config, timings=timings,
                  identity=identity.to_dict(), identity_pass=identity_ok,
                  estimate=terms.report.to_dict(),
                  estimate_pass=terms.report.verdict)

    summary = _summary(config, 'verify-identity', verdict,
                       lhs=terms.report.lhs, rhs=terms.report.rhs)
    return Outcome(report, verdict, [summary], tables,
                   dict(u1=u1, u2=u2))


def cmd_geometry(config: dict, args) -> Outcome:
    timings = {}
    mode = config['mode']
    grid = _setup(config, timings)
    spec1, u1, _ = _solve(config, grid, ('problem1',), timings)['problem1']
    regions = nested_regions(grid, config['tube']['w_margin'],
                             config['tube']['v_margin'],
                             config['tube']['d_margin'])

    with stage('geometry', timings):
        critical, strata, tube = critical_geometry(mode, u1, spec1.A,
                                                   config['tube'],
                                                   regions['V'])

        tables = {}
        profile = None
        real = u1.real
        if u1.is_real:
            values = real.values[grid.valid]
            lo, hi = values.min(), values.max()
            ts = [lo + (hi - lo) * (i + 1) / (LEVEL_COUNT + 1)
                  for i in range(LEVEL_COUNT)]
            eps = [0.2, 0.1, 0.05, 0.02, 0.01] if not critical.empty else []
            profile = level_measure_profile(
                    real, ts, critical.mask if eps else None, eps, grid)
            tables['level_profile'] = profile.table

    coverage_ok = True
    if tube is not None:
        tables['tube'] = tube.table
        coverage_ok = tube.lojasiewicz.coverage >= 0.999

    report = dict(id=config['id'], subcommand='geometry', mode=mode,
                  config=config, timings=timings,
                  critical=critical.to_dict(),
                  strata=strata.to_dict() if strata is not None else None,
                  tube=tube.to_dict() if tube is not None else None,
                  level_profile=profile.to_dict() if profile else None,
                  noncritical=critical.empty)

    return Outcome(report, coverage_ok,
                   [_summary(config, 'geometry', coverage_ok)], tables,
                   dict(u1=u1))


def cmd_stability(config: dict, args) -> Outcome:
    amplitudes = config['family']['amplitudes']

    if not amplitudes:
        report = run_experiment(config)
        return Outcome(report.to_dict(), report.verdict,
                       [dict(report.to_dict(),
                             id=f'{report.id}-stability')],
                       dict(report.tables), dict(report.fields))

    family = run_family(config, amplitudes, workers=args.workers)
    last = family.reports[-1]
    summary = [dict(r.to_dict(), id=f'{r.id}-stability-{r.amplitude:g}',
                    C_final=family.C_calibrated, verdict=v)
               for r, v in zip(family.reports, family.verdicts)]

    tables = dict(last.tables)
    tables['plot_data'] = family.table
    report = dict(id=config['id'], subcommand='stability', config=config,
                  family=family.to_dict())
    return Outcome(report, family.verdict, summary, tables,
                   dict(last.fields))


def cmd_reconstruct(config: dict, args) -> Outcome:
    timings = {}
    mode = config['mode']
    options = config['reconstruct']
    grid = _setup(config, timings)
    spec, u1, _ = _solve(config, grid, ('problem1',), timings)['problem1']

    with stage('reconstruct', timings):
        if mode == 'rho':
            result = reconstruct_rho(u1, spec.gamma, spec.A, spec.omega2,
                                     grid, options['u_floor'])
            reference = spec.rho
            tolerance = options['rho_tolerance']
        else:
            boundary = options['gamma_boundary']
            if boundary is None:
                logging.info('no inflow values given, using problem1.gamma')
                boundary = spec.gamma
            else:
                boundary = build_field(boundary, 'reconstruct.gamma_boundary',
                                       grid.domain.bounds)
            result = reconstruct_gamma_march(
                    u1, spec.rho, spec.A, spec.omega2, boundary, grid,
                    options['grad_floor'], options['direction'])
            reference = spec.gamma
            tolerance = options['gamma_tolerance']

        error = result.relative_error(reference)

    verdict = bool(error <= tolerance)
    report = dict(id=config['id'], subcommand='reconstruct', mode=mode,
                  config=config, timings=timings,
                  reconstruction=result.to_dict(), relative_error=error,
                  tolerance=tolerance)

    name = 'rho' if mode == 'rho' else 'gamma'
    return Outcome(report, verdict,
                   [_summary(config, 'reconstruct', verdict, lhs=error,
                             rhs=tolerance)],
                   fields={'u1': u1, f'{name}_reconstructed': result.values})


# subcommand -> (handler, required config sections)
SUBCOMMANDS: Dict[str, tuple] = {
    'solve': (cmd_solve, ('problem1',)),
    'check-admissible': (cmd_check_admissible, ('problem1', 'problem2')),
    'verify-identity': (cmd_verify_identity, ('problem1', 'problem2')),
    'geometry': (cmd_geometry, ('problem1',)),
    'stability': (cmd_stability, ('problem1', 'problem2')),
    'reconstruct': (cmd_reconstruct, ('problem1',)),
}


def write_outcome(outcome: Outcome, config: dict, subcommand: str,
                  directory: str, timing: bool = False) -> List[str]:
    """ Write the report JSON, the tables and the field dumps of a
    subcommand into `directory` and append its summary rows. """
    ensure_directory(directory)
    paths = [write_report(outcome.report, directory,
                          f'{config["id"]}-{subcommand}', timing)]

    for name, table in sorted(outcome.tables.items()):
        paths.append(write_table(table, directory, name))

    for name, f in sorted(outcome.fields.items()):
        paths.append(write_field(f, directory, name))

    paths.append(append_summary(outcome.summary, directory))
    return paths


def dispatch(subcommand: str, config: dict, out: str, workers=None,
             timing: bool = False) -> int:
    """ Run a subcommand on a parsed config and write its artifacts.

    :returns: The exit status: 0 if every verdict passes, 2 otherwise.
    :raises CoefstabError: if a stage fails.
    """
    handler, _ = SUBCOMMANDS[subcommand]
    args = argparse.Namespace(workers=workers)
    outcome = handler(config, args)
    write_outcome(outcome, config, subcommand, out, timing)

    logging.info(f'{subcommand}: verdict={outcome.verdict}')
    return EXIT_PASS if outcome.verdict else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
            prog='coefstab',
            description='Numerical lab for coefficient identification from '
                        'a single interior measurement.')

    parser.add_argument('subcommand', choices=sorted(SUBCOMMANDS))
    parser.add_argument('--config', required=True, metavar='PATH',
                        help='JSON experiment config')
    parser.add_argument('--out', default='.', metavar='DIR',
                        help='output directory (created if absent)')
    parser.add_argument('--set', dest='overrides', action='append',
                        default=[], metavar='KEY=VALUE',
                        help='override a config value, may be repeated')
    parser.add_argument('--workers', type=int, default=None, metavar='N',
                        help='worker processes for experiment families')
    parser.add_argument('--verbose', action='store_true',
                        help='log progress messages')
    parser.add_argument('--timing', action='store_true',
                        help='keep wall-time fields in reports')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format='%(levelname)s: %(message)s',
                        level=logging.INFO if args.verbose
                        else logging.WARNING)

    _, required = SUBCOMMANDS[args.subcommand]

    try:
        config = parse_config(args.config, args.overrides, required)
        return dispatch(args.subcommand, config, os.path.abspath(args.out),
                        args.workers, args.timing)
    except CoefstabError as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_ERROR
