from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, asdict, field
from typing import List, Optional, Sequence, Tuple
import copy
import logging
import math
import time

import numpy as np
import pandas as pd

from .coefficients import ProblemSpec, psi_field
from .common import progress_bar
from .config import build_domain, build_problem, solver_options
from .errors import ChainError, CoefstabError, ExponentError, \
        NotAdmissibleError, PreconditionError, StageError
from .geometry import TubeFit, detect_critical_set, detect_nodal_set, \
        extract_strata, fit_lojasiewicz, fit_tube_constants, nested_regions
from .grid import build_grid, integrate, norm
from .identity import IdentityReport, build_test_function, \
        dominant_sector, energy_density, fundamental_estimate_check, \
        key_identity_check, potential_estimate_check, \
        potential_identity_check, potential_test_function
from .sectors import SectorDecomposition, cutoff_tau, sector_decompose, \
        theta_clamped, theta_field
from .solver import solve_forward
from .types import Grid, GridField, ShrinkSet

DIMENSION = 2

STAGES = ('grid', 'solve', 'sectors', 'identity', 'estimate', 'geometry',
          'chain')


def split_value(a: float, b: float, r: float, eta: float) -> float:
    """ `a eta + b eta^-r`. """
    return a * eta + b * eta ** (-r)


def _mask(region, grid: Grid) -> np.ndarray:
    if region is None:
        return grid.valid
    if isinstance(region, ShrinkSet):
        return region.mask
    return np.asarray(region, dtype=bool)


def split_coefficients(psi: GridField, tube: TubeFit, region,
                       density: GridField, C2: Optional[float] = None
                       ) -> Tuple[float, float]:
    """ Coefficients `a = C1 |psi|_Linf(V)` and
    `b = int_V |psi| f / (C2^r C3)` of the split estimate. """
    if tube.lojasiewicz is None:
        raise PreconditionError('tube fit lacks the lojasiewicz constants')

    grid = psi.grid
    mask = _mask(region, grid)
    C2 = tube.C2 if C2 is None else C2
    r = tube.r

    weighted = np.abs(psi.values) * np.real(density.values)
    a = tube.C1 * psi.max_abs(mask)
    b = integrate(GridField(grid, weighted), mask & np.isfinite(weighted))
    b = float(b) / (C2 ** r * tube.C3)
    return a, b


def split_bound(psi: GridField, tube: TubeFit, eta: float, region,
                density: GridField, tol: float = 1e-10) -> float:
    """ Bound `int_V |psi| <= a eta + b eta^-r` with the coefficients of
    `split_coefficients`.

    :raises PreconditionError: unless `0 < eta <= 1`.
    :raises ChainError: if the quadrature of `int_V |psi|` exceeds the
                        bound.
    """
    if not 0 < eta <= 1:
        raise PreconditionError(f'eta must lie in (0, 1], got {eta}')

    a, b = split_coefficients(psi, tube, region, density)
    value = split_value(a, b, tube.r, eta)

    mask = _mask(region, psi.grid)
    l1 = float(integrate(psi.abs(), mask))
    if l1 > value + tol * max(1.0, value):
        raise ChainError(f'split estimate fails at eta={eta}: '
                         f'{l1:.6g} > {value:.6g}')

    return value


def optimize_eta(a: float, b: float, r: float) -> Tuple[float, float]:
    """ Minimize `a eta + b eta^-r` over `eta` in `(0, 1]`.

    :returns: `(eta, value)`. For `b = 0` the infimum 0 is approached as
              `eta -> 0` and `eta = 0.0` is returned as a sentinel.
    :raises PreconditionError: if `a` or `b` is negative or `r <= 0`.
    """
    if a < 0 or b < 0:
        raise PreconditionError(f'coefficients must be nonnegative, got '
                                f'a={a}, b={b}')
    if not r > 0:
        raise PreconditionError(f'exponent r must be positive, got {r}')

    if b == 0:
        return 0.0, 0.0

    if a == 0:
        return 1.0, float(b)

    eta = min(1.0, (r * b / a) ** (1.0 / (r + 1)))
    return eta, split_value(a, b, r, eta)


def gn_exponents(n: int = DIMENSION, s: float = 4.0) -> Tuple[float, float]:
    """ Gagliardo-Nirenberg exponents `theta = n / (n + 1 - n/s)` and
    `kappa = 1 - theta`. `s = inf` gives `theta = n / (n + 1)`.

    :raises ExponentError: if `s <= n`.
    """
    if not s > n:
        raise ExponentError(f's must exceed the dimension {n}, got {s}')

    theta = n / (n + 1) if math.isinf(s) else n / (n + 1 - n / s)
    return theta, 1.0 - theta


def gn_test_family(grid: Grid) -> List[GridField]:
    """ The twenty fixed smooth fields calibrating the Gagliardo-Nirenberg
    constant: Gaussians on a 3x3 lattice, centered Gaussians of three
    widths, two anisotropic Gaussians, three powers of the boundary
    distance, the bilinear corner ramp of the bounding box and its square,
    and the constant one. """
    xmin, xmax, ymin, ymax = grid.domain.bounds
    lx, ly = xmax - xmin, ymax - ymin
    diameter = grid.domain.diameter
    cx, cy = xmin + 0.5 * lx, ymin + 0.5 * ly

    def gaussian(x0, y0, wx, wy):
        return grid.evaluate(lambda x, y: np.exp(
            -((x - x0) / wx) ** 2 - ((y - y0) / wy) ** 2))

    family = []
    for fy in (0.25, 0.5, 0.75):
        for fx in (0.25, 0.5, 0.75):
            w = 0.15 * diameter
            family.append(gaussian(xmin + fx * lx, ymin + fy * ly, w, w))

    for fraction in (0.05, 0.2, 0.4):
        w = fraction * diameter
        family.append(gaussian(cx, cy, w, w))

    family.append(gaussian(cx, cy, 0.3 * diameter, 0.05 * diameter))
    family.append(gaussian(cx, cy, 0.05 * diameter, 0.3 * diameter))

    depth = np.maximum(grid.domain.boundary_distance(grid.X, grid.Y), 0.0)
    scale = max(float(np.max(depth)), 1e-300)
    for power in (1, 2, 4):
        family.append(grid.evaluate(lambda x, y: (depth / scale) ** power))

    ramp = grid.evaluate(lambda x, y: (x - xmin) * (y - ymin) / (lx * ly))
    family.append(ramp)
    family.append(ramp * ramp)
    family.append(grid.evaluate(lambda x, y: np.ones_like(x)))
    return family


def gn_ratio(f: GridField, region, s: float) -> float:
    """ `|f|_Linf / (|f|_W1s^theta |f|_L1^(1-theta))` over the region, or 0
    for a field vanishing there. """
    theta, kappa = gn_exponents(DIMENSION, s)
    mask = _mask(region, f.grid)
    linf = norm(f, 'Linf', mask)
    if linf == 0:
        return 0.0

    w1s = norm(f, 'W1s', mask, s=s)
    l1 = norm(f, 'L1', mask)
    return linf / (w1s ** theta * l1 ** kappa)


def fit_gn_constant(grid: Grid, region, s: float) -> float:
    """ Smallest `C'` such that `|f|_Linf(V) <= C' |f|_W1s(V)^theta
    |f|_L1(V)^(1-theta)` holds for every field of the test family. """
    return max(gn_ratio(f, region, s) for f in gn_test_family(grid))


@dataclass
class HolderCertificate:
    """ Constants of the stability chain

        |psi|_Linf(Omega_d) <= C_final rhs^alpha

    `mode` is `tube` when the critical set is nonempty and `noncritical`
    otherwise. In the potential case the chain runs on `|psi|^2` and the
    constants are `C_final = C^(1/2)`, `alpha = alpha/2`.
    """
    mode: str
    squared: bool
    alpha: float
    alpha_boundary: float
    theta: float
    kappa: float
    s: float
    r: Optional[float]
    eta: Optional[float]
    split_min: float
    C_prime: float
    C_psi_prime: float
    C_eff: float
    C_psi: float
    factor: float
    C_final: float
    C_final_analytic: float
    linf_v: float
    l1_v: float
    weighted: float
    chain_consistency: float
    lhs: float
    rhs: float
    verdict: bool
    verdict_analytic: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _tube_constants(linf, weighted, tube, C2):
    r = tube.r
    a = tube.C1 * linf
    b = weighted / (C2 ** r * tube.C3)
    eta, m = optimize_eta(a, b, r)

    if linf > 0 and weighted > 0:
        C_eff = m / (linf ** (r / (r + 1)) * weighted ** (1 / (r + 1)))
    else:
        C_eff = 0.0

    return eta, m, C_eff


def holder_certificate(psi: GridField, density: GridField, region_v,
                       region_d, tube: Optional[TubeFit], s: float,
                       factor: float, rhs: float,
                       C_prime: Optional[float] = None,
                       squared: bool = False) -> HolderCertificate:
    """ Assemble the stability constants from the tube fit, the
    Gagliardo-Nirenberg exponents and the fundamental estimate
    `int |psi| f <= factor rhs`, and check the final inequality.

    With a tube fit, `alpha = kappa / (r + 1)`; without one (no critical
    points) the bound `int_V |psi| <= int_V |psi| f / min_V f` is used and
    `alpha = kappa`.

    :param density: The weight `f` of the estimate.
    :param squared: Run the chain on `|psi|^2` (potential mode).
    :raises ChainError: if an intermediate inequality fails.
    """
    grid = psi.grid
    V = _mask(region_v, grid)
    D = _mask(region_d, grid)
    chain_psi = GridField(grid, np.abs(psi.values) ** 2) if squared else psi

    theta, kappa = gn_exponents(DIMENSION, s)
    if C_prime is None:
        C_prime = fit_gn_constant(grid, V, s)

    f = np.real(density.values)
    weighted_values = np.abs(chain_psi.values) * f
    linf_v = chain_psi.max_abs(V)
    l1_v = float(integrate(chain_psi.abs(), V))
    weighted = float(integrate(GridField(grid, weighted_values),
                               V & np.isfinite(weighted_values)))
    w1s = norm(chain_psi, 'W1s', V, s=s) if linf_v > 0 else 0.0
    C_psi_prime = C_prime * w1s ** theta
    tol = 1e-10

    if tube is None:
        values = f[V & np.isfinite(f)]
        f_min = float(np.min(values)) if values.size else 0.0
        if f_min <= 0:
            raise ChainError('energy density vanishes on V without a '
                             'critical set')

        mode, r, eta = 'noncritical', None, None
        chain_alpha = kappa
        alpha_boundary = kappa
        split_min = weighted / f_min
        C_eff = 1.0 / f_min
        C_psi = C_psi_prime * f_min ** (-kappa)
        C_psi_analytic = C_psi
        consistency = 0.0
    else:
        mode, r = 'tube', tube.r
        chain_alpha = kappa / (r + 1)
        alpha_boundary = (1 - theta) / (1 + r * theta)
        eta, split_min, C_eff = _tube_constants(linf_v, weighted, tube,
                                                tube.C2)
        _, _, C_eff_analytic = _tube_constants(linf_v, weighted, tube,
                                               tube.C2_analytic)

        power = linf_v ** (r / (r + 1))
        C_psi = C_psi_prime * (C_eff * power) ** kappa
        C_psi_analytic = C_psi_prime * (C_eff_analytic * power) ** kappa

        intermediate = weighted ** (kappa / (r + 1))
        if C_eff > 0:
            through = (split_min / (C_eff * power)) ** kappa
            consistency = abs(intermediate - through) / intermediate
        else:
            consistency = 0.0

    if l1_v > split_min + tol * max(1.0, split_min):
        raise ChainError(f'L1 bound fails on V: {l1_v:.6g} > '
                         f'{split_min:.6g}')

    C_final = C_psi * factor ** chain_alpha
    C_final_analytic = C_psi_analytic * factor ** chain_alpha
    alpha = chain_alpha

    if squared:
        C_final = math.sqrt(C_final)
        C_final_analytic = math.sqrt(C_final_analytic)
        alpha = 0.5 * chain_alpha
        alpha_boundary = 0.5 * alpha_boundary

    lhs = psi.max_abs(D)
    bound = C_final * rhs ** alpha
    bound_analytic = C_final_analytic * rhs ** alpha

    certificate = HolderCertificate(
            mode=mode,
            squared=squared,
            alpha=alpha,
            alpha_boundary=alpha_boundary,
            theta=theta,
            kappa=kappa,
            s=s,
            r=r,
            eta=eta,
            split_min=split_min,
            C_prime=C_prime,
            C_psi_prime=C_psi_prime,
            C_eff=C_eff,
            C_psi=C_psi,
            factor=factor,
            C_final=C_final,
            C_final_analytic=C_final_analytic,
            linf_v=linf_v,
            l1_v=l1_v,
            weighted=weighted,
            chain_consistency=consistency,
            lhs=lhs,
            rhs=rhs,
            verdict=bool(lhs <= bound * (1 + 1e-12)),
            verdict_analytic=bool(lhs <= bound_analytic * (1 + 1e-12)),
    )

    logging.info(f'holder certificate ({mode}): alpha={alpha:.4g} '
                 f'C_final={C_final:.4g} lhs={lhs:.4g} rhs={rhs:.4g}')
    return certificate


@dataclass
class StabilityReport:
    id: str
    mode: str
    lhs: float
    rhs: float
    alpha: float
    C_final: float
    verdict: bool
    verdict_analytic: bool
    norms: dict
    certificate: Optional[HolderCertificate]
    sectors: Optional[dict]
    identity: Optional[dict]
    estimate: Optional[dict]
    critical: Optional[dict]
    tube: Optional[dict]
    solves: dict
    timings: dict
    config: dict
    amplitude: Optional[float] = None
    tables: dict = field(default_factory=dict, repr=False)
    fields: dict = field(default_factory=dict, repr=False)

    def with_constant(self, C_final: float) -> dict:
        """ The verdict of this report under another constant. """
        return dict(C_final=C_final,
                    verdict=bool(self.lhs <= C_final * self.rhs ** self.alpha *
                                 (1 + 1e-12)))

    def to_dict(self) -> dict:
        return dict(
            id=self.id,
            mode=self.mode,
            amplitude=self.amplitude,
            lhs=self.lhs,
            rhs=self.rhs,
            alpha=self.alpha,
            C_final=self.C_final,
            verdict=self.verdict,
            verdict_analytic=self.verdict_analytic,
            norms=self.norms,
            certificate=self.certificate.to_dict() if self.certificate
            else None,
            sectors=self.sectors,
            identity=self.identity,
            estimate=self.estimate,
            critical=self.critical,
            tube=self.tube,
            solves=self.solves,
            timings=self.timings,
            config=self.config,
        )


@contextmanager
def stage(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except CoefstabError as e:
        raise StageError(name, e) from e
    finally:
        timings[name] = time.perf_counter() - start


def perturbation(mode: str, spec1: ProblemSpec, spec2: ProblemSpec,
                 grid: Grid) -> GridField:
    """ `gamma2 - gamma1` in gamma mode, `rho2 - rho1` in rho mode. """
    if mode == 'gamma':
        return psi_field(spec1.gamma, spec2.gamma, grid)
    return psi_field(spec1.rho, spec2.rho, grid)


def identity_check(mode: str, u1: GridField, u2: GridField,
                   spec1: ProblemSpec, spec2: ProblemSpec, psi: GridField,
                   sectors: Optional[SectorDecomposition], h_band: float,
                   depth: Optional[float] = None
                   ) -> Tuple[IdentityReport, GridField]:
    """ Evaluate the key identity (gamma mode, with the test function of the
    sector carrying most of `|psi|`) or the potential identity (rho mode).

    In rho mode the cutoff band is narrowed to `depth` so that the cutoff
    equals one on the region at that depth.

    :returns: The identity report and the cutoff `tau`.
    """
    grid = u1.grid
    A, omega2 = spec1.A, spec1.omega2

    if mode == 'gamma':
        tau = cutoff_tau(grid.interior, h_band, grid)
        k = dominant_sector(psi, sectors)
        theta_kh, _ = theta_clamped(theta_field(psi, sectors, k), h_band)
        zeta = build_test_function(u1, tau, theta_kh)
        report = key_identity_check(u1, u2, spec1.gamma, spec2.gamma,
                                    spec2.rho, A, omega2, zeta, grid, h_band)
        report.sector = k
        return report, tau

    if depth is not None and depth > 2 * grid.h:
        h_band = min(h_band, depth)

    tau = cutoff_tau(grid.interior, h_band, grid)
    zeta = potential_test_function(u1, spec1.rho, spec2.rho, tau)
    report = potential_identity_check(u1, u2, spec1.gamma, A, spec1.rho,
                                      spec2.rho, omega2, zeta, grid, h_band)
    return report, tau


@dataclass
class EstimateTerms:
    """ The fundamental estimate `int |psi| f <= factor rhs` in the form
    used by the stability chain. """
    report: object
    factor: float
    rhs: float
    density: GridField
    boundary_norm: Optional[float]


def estimate_check(mode: str, u1: GridField, u2: GridField,
                   spec1: ProblemSpec, spec2: ProblemSpec, psi: GridField,
                   sectors: Optional[SectorDecomposition],
                   tau: GridField) -> EstimateTerms:
    grid = u1.grid
    A, omega2 = spec1.A, spec1.omega2

    if mode == 'gamma':
        report = fundamental_estimate_check(u1, u2, psi, A, spec1.rho,
                                            omega2, sectors, grid)
        return EstimateTerms(report, report.four_C_over_sin,
                             report.boundary_norm + report.w21,
                             energy_density(u1, A), report.boundary_norm)

    report = potential_estimate_check(u1, u2, spec1.gamma, A, spec1.rho,
                                      spec2.rho, omega2, tau, grid)
    density = GridField(grid, np.abs(u1.values) ** 2)
    return EstimateTerms(report, report.C_rho / omega2, report.w11, density,
                         None)


def critical_geometry(mode: str, u1: GridField, A, options: dict, region,
                      density: Optional[GridField] = None):
    """ Detect the critical set of `u1` (its nodal set in rho mode), extract
    the strata and fit the tube and Lojasiewicz constants with the `tube`
    section of a config.

    :returns: `(critical, strata, tube)`; `strata` and `tube` are `None`
              for an empty critical set.
    """
    grid = u1.grid
    if mode == 'gamma':
        critical = detect_critical_set(u1, grid, options['tau_z'],
                                       options['w_margin'])
    else:
        critical = detect_nodal_set(u1, grid, options['tau_z'],
                                    options['w_margin'])

    if critical.empty:
        logging.info('critical set is empty, using the noncritical bound')
        return critical, None, None

    strata = extract_strata(critical, grid)
    tube = fit_tube_constants(strata, grid, options['etas'], options['R'])
    fit_radius = options['fit_radius']
    loj = fit_lojasiewicz(u1, A, critical, region, strata,
                          fit_radius * grid.domain.diameter if fit_radius
                          else None,
                          options['quantile'], options['bins'],
                          density=density)
    return critical, strata, tube.with_lojasiewicz(loj)


def run_experiment(config: dict, amplitude: Optional[float] = None
                   ) -> StabilityReport:
    """ Run a complete stability experiment described by a validated config:
    two forward solves, the sector decomposition, the identity and estimate
    checks, the critical geometry and the stability chain.

    In gamma mode `psi = gamma2 - gamma1` and the right-hand side is
    `|psi|_Linf(boundary) + |u2 - u1|_W21`. In rho mode
    `psi = rho2 - rho1`, the right-hand side is `|u2 - u1|_W11` and there
    is no boundary term.

    :param amplitude: Scale the perturbation of problem 2 by this factor.
    :raises StageError: wrapping the error of the failing stage.
    """
    timings = {}
    mode = config['mode']
    tube_options = config['tube']
    sigma = config['sectors']['sigma']
    h_band = config['sectors']['h_band']

    with stage('grid', timings):
        grid = build_grid(build_domain(config), config['grid']['n_cells'])
        regions = nested_regions(grid, tube_options['w_margin'],
                                 tube_options['v_margin'],
                                 tube_options['d_margin'])

    with stage('solve', timings):
        spec1 = build_problem(config, 'problem1')
        spec2 = build_problem(config, 'problem2', amplitude)
        options = solver_options(config)
        u1, report1 = solve_forward(spec1, grid, **options)
        u2, report2 = solve_forward(spec2, grid, **options)

    A = spec1.A
    sectors = None

    with stage('sectors', timings):
        psi = perturbation(mode, spec1, spec2, grid)
        if mode == 'gamma':
            sectors = sector_decompose(psi, sigma, grid)
            if not sectors.admissible:
                raise NotAdmissibleError(sectors.witness)

    with stage('identity', timings):
        identity, tau = identity_check(mode, u1, u2, spec1, spec2, psi,
                                       sectors, h_band, regions['V'].depth)

    with stage('estimate', timings):
        terms = estimate_check(mode, u1, u2, spec1, spec2, psi, sectors, tau)

    with stage('geometry', timings):
        critical, _, tube = critical_geometry(mode, u1, A, tube_options,
                                              regions['V'], terms.density)

    with stage('chain', timings):
        certificate = holder_certificate(
                psi, terms.density, regions['V'], regions['d'], tube,
                config['chain']['s'], terms.factor, terms.rhs,
                squared=(mode == 'rho'))

    norms = dict(
        psi_linf_d=psi.max_abs(regions['d'].mask),
        psi_linf_v=psi.max_abs(regions['V'].mask),
        psi_linf_boundary=terms.boundary_norm,
        w21=norm(u2 - u1, 'W21'),
        w11=norm(u2 - u1, 'W11'),
    )
    if mode == 'rho':
        norms.pop('psi_linf_boundary')

    tables = {}
    if sectors is not None and sectors.measures is not None:
        tables['sectors'] = sectors.measures
    if tube is not None:
        tables['tube'] = tube.table

    echo = copy.deepcopy(config)
    report = StabilityReport(
            id=config['id'],
            mode=mode,
            lhs=certificate.lhs,
            rhs=certificate.rhs,
            alpha=certificate.alpha,
            C_final=certificate.C_final,
            verdict=certificate.verdict,
            verdict_analytic=certificate.verdict_analytic,
            norms=norms,
            certificate=certificate,
            sectors=sectors.to_dict() if sectors is not None else None,
            identity=identity.to_dict(),
            estimate=terms.report.to_dict(),
            critical=critical.to_dict(),
            tube=tube.to_dict() if tube is not None else None,
            solves=dict(problem1=report1.to_dict(),
                        problem2=report2.to_dict()),
            timings=timings,
            config=echo,
            amplitude=amplitude,
            tables=tables,
            fields=dict(u1=u1, u2=u2),
    )

    logging.info(f'experiment {report.id!r}: verdict={report.verdict}')
    return report


def _run_member(args):
    config, amplitude = args
    return run_experiment(config, amplitude)


@dataclass
class FamilyResult:
    """ An experiment family: one report per amplitude, the constant
    calibrated at the largest amplitude and the verdicts under it. """
    reports: List[StabilityReport]
    C_calibrated: float
    verdicts: List[bool]
    slope: Optional[float]
    slope_verdict: bool
    monotone: bool

    @property
    def verdict(self) -> bool:
        return all(self.verdicts)

    @property
    def table(self) -> pd.DataFrame:
        return pd.DataFrame(dict(
            amplitude=[r.amplitude for r in self.reports],
            lhs=[r.lhs for r in self.reports],
            rhs=[r.rhs for r in self.reports],
            alpha=[r.alpha for r in self.reports],
            C_final=[r.C_final for r in self.reports],
            verdict=self.verdicts,
        ))

    def to_dict(self) -> dict:
        return dict(
            C_calibrated=self.C_calibrated,
            verdicts=self.verdicts,
            verdict=self.verdict,
            slope=self.slope,
            slope_verdict=self.slope_verdict,
            monotone=self.monotone,
            members=[r.to_dict() for r in self.reports],
        )


def run_family(config: dict, amplitudes: Optional[Sequence[float]] = None,
               workers: Optional[int] = 1) -> FamilyResult:
    """ Run one experiment per amplitude `t` (the perturbation of problem 2
    scaled by `t`), in a process pool when `workers > 1`.

    The constant `C_final` of the largest amplitude is applied to every
    member. Also reported: the free-constant verdict (the log-log slope of
    lhs against rhs is at least `alpha`) and whether lhs and rhs increase
    together.
    """
    amplitudes = sorted(amplitudes if amplitudes is not None
                        else config['family']['amplitudes'])
    if not amplitudes:
        raise PreconditionError('experiment family has no amplitudes')

    jobs = [(config, t) for t in amplitudes]

    if workers is not None and workers <= 1:
        reports = [_run_member(job) for job in progress_bar(jobs)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_member, jobs))

    C_calibrated = reports[-1].C_final
    verdicts = [r.with_constant(C_calibrated)['verdict'] for r in reports]

    lhs = np.array([r.lhs for r in reports])
    rhs = np.array([r.rhs for r in reports])
    alpha = min(r.alpha for r in reports)

    slope = None
    positive = (lhs > 0) & (rhs > 0)
    if np.count_nonzero(positive) >= 2:
        slope = float(np.polyfit(np.log(rhs[positive]), np.log(lhs[positive]),
                                 1)[0])

    slope_verdict = slope is None or slope >= alpha
    monotone = bool(np.all(np.diff(lhs) >= 0) and np.all(np.diff(rhs) >= 0))

    result = FamilyResult(reports, C_calibrated, verdicts, slope,
                          bool(slope_verdict), monotone)
    logging.info(f'family {config["id"]!r}: C={C_calibrated:.4g} '
                 f'verdicts={verdicts}')
    return result
