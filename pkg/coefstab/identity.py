from dataclasses import dataclass, asdict, field
from typing import List, Optional, Sequence
import logging
import math

import numpy as np
import pandas as pd

from .coefficients import Field, evaluate_matrix
from .errors import DegenerateIdentityError, NotAdmissibleError, \
        PreconditionError, ResolutionError
from .grid import gradient, integrate, level_measure, norm
from .sectors import SectorDecomposition, cutoff_tau, theta_clamped, \
        theta_field
from .types import Grid, GridField

# Gradient bound of the smoothstep cutoff, |grad tau| <= C_TAU / h.
C_TAU = 3.0

TRACE_TOLERANCE = 1e-12


@dataclass
class IdentityReport:
    lhs: complex
    rhs: complex
    residual: float
    relative: float
    n_cells: int
    h_band: Optional[float] = None
    sector: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EstimateReport:
    """ Terms of the fundamental estimate
    `int |psi| A grad u1 . conj(grad u1) <= 4C/sin(sigma/2) (|psi|_bd +
    |u2 - u1|_W21)`. """
    lhs: float
    lhs_imag: float
    sectors: List[dict]
    sector_sum: float
    beta_bound: float
    C_tau: float
    C: float
    sigma: float
    four_C_over_sin: float
    boundary_norm: float
    w21: float
    rhs: float
    beta_margin: float
    uncovered: int
    verdict: bool

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0

    def to_dict(self) -> dict:
        result = asdict(self)
        result['ratio'] = self.ratio
        return result


@dataclass
class PotentialEstimateReport:
    """ Terms of `omega2 int tau |u1|^2 |rho2 - rho1|^2 <= C_rho
    |u2 - u1|_W11`. """
    lhs: float
    C_rho: float
    w11: float
    rhs: float
    verdict: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, GridField) else np.asarray(f)


def _coefficient(f, grid: Grid) -> np.ndarray:
    if isinstance(f, Field):
        return f.evaluate(grid).values
    return _values(f)


def a_gradient(u: GridField, A, grid: Optional[Grid] = None):
    """ Components `(A grad u)_1, (A grad u)_2` as node arrays. """
    grid = grid or u.grid
    ux, uy = gradient(u)
    Av = evaluate_matrix(A, grid) if not isinstance(A, np.ndarray) else A
    q1 = Av[0, 0] * ux.values + Av[0, 1] * uy.values
    q2 = Av[1, 0] * ux.values + Av[1, 1] * uy.values
    return q1, q2


def energy_density(u: GridField, A) -> GridField:
    """ `Re (A grad u) . conj(grad u)`, nonnegative for positive `A`. """
    ux, uy = gradient(u)
    q1, q2 = a_gradient(u, A)
    f = q1 * np.conj(ux.values) + q2 * np.conj(uy.values)
    return GridField(u.grid, np.real(f))


def _dot_gradient(q1, q2, zeta: GridField):
    zx, zy = gradient(zeta)
    return q1 * zx.values + q2 * zy.values


def _integrate_finite(grid: Grid, *integrands):
    mask = grid.valid.copy()
    for values in integrands:
        mask &= np.isfinite(values)
    return [integrate(GridField(grid, v), mask) for v in integrands]


def _report(lhs, rhs, grid, h_band=None) -> IdentityReport:
    residual = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    relative = residual / scale if residual > 0 else 0.0
    return IdentityReport(complex(lhs), complex(rhs), float(residual),
                          float(relative), grid.n_cells, h_band)


def _check_trace(zeta: GridField):
    trace = np.abs(zeta.values[zeta.grid.boundary])
    if np.any(~np.isfinite(trace)) or np.max(trace, initial=0.0) > \
            TRACE_TOLERANCE:
        raise PreconditionError(
                f'test function does not vanish on the boundary (max '
                f'{np.nanmax(trace):.3g})')


def build_test_function(u1: GridField, tau: GridField, theta_kh: GridField
                        ) -> GridField:
    """ `zeta = conj(u1) tau theta_kh`. """
    return u1.conj() * tau * theta_kh


def potential_test_function(u1: GridField, rho1, rho2, tau: GridField
                            ) -> GridField:
    """ `zeta = tau conj(u1 (rho2 - rho1))`. """
    grid = u1.grid
    diff = _coefficient(rho2, grid) - _coefficient(rho1, grid)
    return tau * np.conj(u1.values * diff)


def key_identity_check(u1: GridField, u2: GridField, gamma1, gamma2, rho, A,
                       omega2: float, zeta: GridField,
                       grid: Optional[Grid] = None,
                       h_band: Optional[float] = None) -> IdentityReport:
    """ Evaluate both sides of

        int psi (A grad u1) . grad zeta =
            -int gamma2 (A grad w) . grad zeta + omega2 int rho w zeta

    with `psi = gamma2 - gamma1` and `w = u2 - u1` by quadrature.

    :raises PreconditionError: if `zeta` does not vanish on the boundary.
    """
    grid = grid or u1.grid
    _check_trace(zeta)

    g1 = _coefficient(gamma1, grid)
    g2 = _coefficient(gamma2, grid)
    rho = _coefficient(rho, grid)
    w = u2 - u1

    q1, q2 = a_gradient(u1, A, grid)
    lhs_integrand = (g2 - g1) * _dot_gradient(q1, q2, zeta)

    p1, p2 = a_gradient(w, A, grid)
    rhs_integrand = -g2 * _dot_gradient(p1, p2, zeta) + \
        omega2 * rho * w.values * zeta.values

    lhs, rhs = _integrate_finite(grid, lhs_integrand, rhs_integrand)
    return _report(lhs, rhs, grid, h_band)


def potential_identity_check(u1: GridField, u2: GridField, gamma, A,
                             rho1, rho2, omega2: float, zeta: GridField,
                             grid: Optional[Grid] = None,
                             h_band: Optional[float] = None
                             ) -> IdentityReport:
    """ Evaluate both sides of

        omega2 int u1 (rho2 - rho1) zeta =
            int gamma (A grad w) . grad zeta - omega2 int rho2 w zeta

    :raises DegenerateIdentityError: if `omega2 == 0`.
    :raises PreconditionError: if `zeta` does not vanish on the boundary.
    """
    if omega2 == 0:
        raise DegenerateIdentityError(
                'the potential identity is trivial for omega2 = 0')

    grid = grid or u1.grid
    _check_trace(zeta)

    gamma = _coefficient(gamma, grid)
    r1 = _coefficient(rho1, grid)
    r2 = _coefficient(rho2, grid)
    w = u2 - u1

    lhs_integrand = omega2 * u1.values * (r2 - r1) * zeta.values
    p1, p2 = a_gradient(w, A, grid)
    rhs_integrand = gamma * _dot_gradient(p1, p2, zeta) - \
        omega2 * r2 * w.values * zeta.values

    lhs, rhs = _integrate_finite(grid, lhs_integrand, rhs_integrand)
    return _report(lhs, rhs, grid, h_band)


def sector_masks(psi: GridField, sectors: SectorDecomposition) -> list:
    """ Node masks of `{theta_k >= 0, psi != 0}` for every sector. """
    tau_0 = 1e-10 * psi.max_abs()
    nonzero = psi.valid & (np.abs(np.nan_to_num(psi.values)) > tau_0)
    result = []

    for k in range(len(sectors)):
        theta = theta_field(psi, sectors, k).values
        with np.errstate(invalid='ignore'):
            result.append(nonzero & (theta >= 0))

    return result


def dominant_sector(psi: GridField, sectors: SectorDecomposition) -> int:
    """ Index of the sector carrying the largest share of `int |psi|`. """
    abs_psi = GridField(psi.grid, np.abs(np.nan_to_num(psi.values)))
    shares = [float(np.real(integrate(abs_psi, mask)))
              for mask in sector_masks(psi, sectors)]
    return int(np.argmax(shares)) if shares else 0


def stiffness_constant(u1: GridField, A, grid: Grid) -> float:
    """ `C_tau H1(boundary) max |u1| |A grad u1|`. """
    q1, q2 = a_gradient(u1, A, grid)
    flux = np.abs(u1.values) * np.sqrt(np.abs(q1) ** 2 + np.abs(q2) ** 2)
    flux = flux[grid.valid & np.isfinite(flux)]
    peak = float(np.max(flux)) if flux.size else 0.0
    return C_TAU * grid.domain.perimeter * peak


def fundamental_estimate_check(u1: GridField, u2: GridField, psi: GridField,
                               A, rho, omega2: float,
                               sectors: SectorDecomposition,
                               grid: Optional[Grid] = None
                               ) -> EstimateReport:
    """ Check the fundamental estimate with explicit constants

        C = max{C_tau H1(boundary) |conj(u1) A grad u1|_inf,
                2 / sigma^2 + omega2 |rho|_inf}

    and the per-sector bound `|psi| <= Re(beta_k psi) / sin(sigma/2)`.
    `beta_margin` is the largest `|psi| - Re(beta_k psi) / sin(sigma/2)`
    over the nodes of all sectors, `uncovered` the number of nodes with
    `psi != 0` in no sector. The verdict requires `lhs <= rhs`, a
    non-positive margin and no uncovered node.

    :raises NotAdmissibleError: if the sectors are not admissible.
    """
    if not sectors.admissible:
        raise NotAdmissibleError(sectors.witness)

    grid = grid or u1.grid
    sigma = sectors.sigma
    ux, uy = gradient(u1)
    q1, q2 = a_gradient(u1, A, grid)
    density = q1 * np.conj(ux.values) + q2 * np.conj(uy.values)
    abs_psi = np.abs(psi.values)

    mask = grid.valid & np.isfinite(density) & psi.valid
    lhs_c = integrate(GridField(grid, abs_psi * density), mask)
    lhs = float(np.real(lhs_c))
    lhs_imag = float(np.imag(lhs_c))

    f = np.real(density)
    sin_half = math.sin(0.5 * sigma)
    rows = []
    sector_sum = 0.0
    beta_sum = 0.0
    excesses = []

    masks = sector_masks(psi, sectors)
    tau_0 = 1e-10 * psi.max_abs()
    covered = np.zeros(grid.shape, dtype=bool)
    for sector in masks:
        covered |= sector
    nonzero = psi.valid & (np.abs(np.nan_to_num(psi.values)) > tau_0)
    uncovered = int(np.count_nonzero(nonzero & ~covered))

    for k, sector in enumerate(masks):
        if np.any(sector):
            excess = abs_psi[sector] - \
                np.real(sectors.beta(k) * psi.values[sector]) / sin_half
            excesses.append(float(np.max(excess)))

        region = sector & mask
        signed = integrate(GridField(grid, psi.values * f), region)
        absolute = float(integrate(GridField(grid, abs_psi * f), region))
        weighted = float(np.real(sectors.beta(k) * signed))
        sector_sum += absolute
        beta_sum += weighted
        rows.append(dict(k=k, integral=complex(signed), abs_integral=absolute,
                         beta_weighted=weighted))

    rho_max = float(np.nanmax(np.abs(_coefficient(rho, grid)[grid.valid])))
    C = max(stiffness_constant(u1, A, grid),
            2.0 / sigma ** 2 + omega2 * rho_max)
    factor = 4 * C / sin_half

    boundary_norm = psi.max_abs(grid.boundary)
    w21 = norm(u2 - u1, 'W21')
    beta_margin = max(excesses) if excesses else 0.0
    rhs = factor * (boundary_norm + w21)
    tolerance = 1e-10 * max(1.0, psi.max_abs())
    verdict = lhs <= rhs and beta_margin <= tolerance and uncovered == 0

    report = EstimateReport(
            lhs=lhs,
            lhs_imag=lhs_imag,
            sectors=rows,
            sector_sum=sector_sum,
            beta_bound=beta_sum / sin_half,
            C_tau=C_TAU,
            C=C,
            sigma=sigma,
            four_C_over_sin=factor,
            boundary_norm=boundary_norm,
            w21=w21,
            rhs=rhs,
            beta_margin=beta_margin,
            uncovered=uncovered,
            verdict=bool(verdict),
    )

    logging.info(f'fundamental estimate: lhs={lhs:.4g} rhs={rhs:.4g} '
                 f'beta_margin={beta_margin:.3g} uncovered={uncovered}')
    return report


def fundamental_equality_terms(u1: GridField, u2: GridField, psi: GridField,
                               gamma2, rho, A, omega2: float,
                               sectors: SectorDecomposition,
                               h_bands: Sequence[float] = (0.2, 0.1, 0.05),
                               grid: Optional[Grid] = None) -> pd.DataFrame:
    """ Snapshot of the five terms bounding each sector integral at finite
    band widths, with `U = interior`:

    - `T0 = |int psi tau theta_kh A grad u1 . conj(grad u1)|`
    - `T1 = |int psi conj(u1) tau A grad u1 . grad theta_kh|`
    - `T2 = |int psi conj(u1) theta_kh A grad u1 . grad tau|`
    - `T3 = |int gamma2 A grad w . grad zeta|`
    - `T4 = omega2 |int rho w zeta|`

    `T0 <= T1 + T2 + T3 + T4` up to quadrature error. Band widths which
    are too small for the grid are skipped.
    """
    if not sectors.admissible:
        raise NotAdmissibleError(sectors.witness)

    grid = grid or u1.grid
    region = grid.interior
    g2 = _coefficient(gamma2, grid)
    rho = _coefficient(rho, grid)
    w = u2 - u1

    ux, uy = gradient(u1)
    q1, q2 = a_gradient(u1, A, grid)
    p1, p2 = a_gradient(w, A, grid)
    density = q1 * np.conj(ux.values) + q2 * np.conj(uy.values)
    boundary_bound = stiffness_constant(u1, A, grid) * \
        psi.max_abs(grid.boundary)

    rows = []
    for h_band in h_bands:
        try:
            tau = cutoff_tau(region, h_band, grid)
        except ResolutionError as e:
            logging.warning(f'skipping band width {h_band}: {e}')
            continue

        for k in range(len(sectors)):
            theta = theta_field(psi, sectors, k)
            theta_kh, band = theta_clamped(theta, h_band)
            zeta = build_test_function(u1, tau, theta_kh)
            pu = psi.values * np.conj(u1.values)

            terms = [
                psi.values * tau.values * theta_kh.values * density,
                pu * tau.values * _dot_gradient(q1, q2, theta_kh),
                pu * theta_kh.values * _dot_gradient(q1, q2, tau),
                g2 * _dot_gradient(p1, p2, zeta),
                rho * w.values * zeta.values,
            ]
            values = _integrate_finite(grid, *terms)
            values[4] = omega2 * values[4]

            rows.append(dict(
                h_band=h_band,
                k=k,
                T0=abs(values[0]),
                T1=abs(values[1]),
                T2=abs(values[2]),
                T3=abs(values[3]),
                T4=abs(values[4]),
                band_area=float(integrate(
                    GridField(grid, band.astype(float)), grid.valid)),
                band_level=level_measure(theta, 0.5 * h_band, region),
                boundary_bound=boundary_bound,
            ))

    columns = ['h_band', 'k', 'T0', 'T1', 'T2', 'T3', 'T4', 'band_area',
               'band_level', 'boundary_bound']
    return pd.DataFrame(rows, columns=columns)


def potential_estimate_check(u1: GridField, u2: GridField, gamma, A,
                             rho1, rho2, omega2: float, tau: GridField,
                             grid: Optional[Grid] = None
                             ) -> PotentialEstimateReport:
    """ Check `omega2 int tau |u1|^2 |rho2 - rho1|^2 <= C_rho |w|_W11` with
    `C_rho = max{|gamma A|_inf |grad zeta|_inf, omega2 |rho2|_inf
    |zeta|_inf}` for the test function `tau conj(u1 (rho2 - rho1))`.

    :raises DegenerateIdentityError: if `omega2 == 0`.
    """
    if omega2 == 0:
        raise DegenerateIdentityError(
                'the potential estimate is trivial for omega2 = 0')

    grid = grid or u1.grid
    r1 = _coefficient(rho1, grid)
    r2 = _coefficient(rho2, grid)
    gamma = _coefficient(gamma, grid)
    weight = tau.values * np.abs(u1.values) ** 2 * np.abs(r2 - r1) ** 2
    mask = grid.valid & np.isfinite(weight)
    lhs = omega2 * float(np.real(integrate(GridField(grid, weight), mask)))

    zeta = potential_test_function(u1, r1, r2, tau)
    zx, zy = gradient(zeta)
    grad_zeta = np.sqrt(np.abs(zx.values) ** 2 + np.abs(zy.values) ** 2)

    Av = evaluate_matrix(A, grid)
    frobenius = np.sqrt(np.sum(np.abs(Av) ** 2, axis=(0, 1))) * np.abs(gamma)

    def peak(values):
        values = values[grid.valid & np.isfinite(values)]
        return float(np.max(values)) if values.size else 0.0

    C_rho = max(peak(frobenius) * peak(grad_zeta),
                omega2 * peak(np.abs(r2)) * peak(np.abs(zeta.values)))
    w11 = norm(u2 - u1, 'W11')
    rhs = C_rho * w11

    return PotentialEstimateReport(lhs, C_rho, w11, rhs, bool(lhs <= rhs))
