from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple
import logging
import math

import numpy as np
import pandas as pd
from scipy import ndimage

from .common import smoothstep
from .errors import NotAdmissibleError, PreconditionError, ResolutionError
from .grid import distance_field, level_measure
from .types import Grid, GridField

TWO_PI = 2 * math.pi

# Angular resolution of the candidate lattice.
ANGLE_STEP = math.pi / 36

VACUOUS_ANGLES = (0.25 * math.pi, 0.75 * math.pi, 1.25 * math.pi,
                  1.75 * math.pi)


@dataclass(frozen=True)
class SectorDecomposition:
    """ Exceptional angles `kappa_0 < ... < kappa_{l-1}` splitting the
    complex plane into sectors, with the margin `sigma`.

    Sector `k` (zero-based) contains the arguments between `angles[k]` and
    `angles[k + 1]`, where the angle after the last one is
    `angles[0] + 2 pi`.
    """
    angles: Tuple[float, ...]
    sigma: float
    admissible: bool = True
    witness: Optional[float] = None
    vacuous: bool = False
    measures: Optional[pd.DataFrame] = field(default=None, repr=False,
                                             compare=False)

    def __len__(self):
        return len(self.angles)

    def _next(self, k):
        if k == len(self.angles) - 1:
            return self.angles[0] + TWO_PI
        return self.angles[k + 1]

    def gap(self, k: int) -> float:
        return self._next(k) - self.angles[k]

    def beta(self, k: int) -> complex:
        """ Rotation `exp(-i (kappa_k + kappa_{k+1}) / 2)` which moves the
        middle of sector `k` onto the positive real axis. """
        return complex(np.exp(-0.5j * (self.angles[k] + self._next(k))))

    def slope(self, k: int) -> float:
        """ `c_k = 1 / tan(gap_k / 2)`. """
        return 1.0 / math.tan(0.5 * self.gap(k))

    def to_dict(self) -> dict:
        return dict(
            angles=list(self.angles),
            sigma=self.sigma,
            admissible=self.admissible,
            witness=self.witness,
            vacuous=self.vacuous,
            sectors=[dict(k=k, gap=self.gap(k), c=self.slope(k),
                          beta=self.beta(k))
                     for k in range(len(self.angles))],
        )


def _check_sigma(sigma):
    if not 0 < sigma <= math.pi / 4:
        raise PreconditionError(f'sigma must lie in (0, pi/4], got {sigma}')


def sufficient_condition_check(psi: GridField, kappa: float, sigma: float
                               ) -> bool:
    """ Check `|Im psi| <= tan(kappa) |Re psi|` at every node. If this holds
    the pair is admissible.

    :raises PreconditionError: unless `0 <= kappa < (pi - sigma) / 2`.
    """
    if not 0 <= kappa < 0.5 * (math.pi - sigma):
        raise PreconditionError(
                f'kappa must lie in [0, (pi - sigma)/2), got {kappa}')

    values = psi.values[psi.valid]
    tol = 1e-12 * psi.max_abs()
    lhs = np.abs(np.imag(values))
    rhs = math.tan(kappa) * np.abs(np.real(values))
    return bool(np.all(lhs <= rhs + tol))


def angle_measure(psi: GridField, kappa: float, nonzero: np.ndarray,
                  flat_tol: float) -> float:
    """ Estimated length of `{psi != 0, arg psi = kappa}`. Infinite if the
    set has interior points. """
    rotated = psi.values * np.exp(-1j * kappa)
    im = np.imag(rotated)
    mask = nonzero & (np.real(rotated) > 0)

    if not np.any(mask):
        return 0.0

    flat = mask & (np.abs(im) <= flat_tol)
    if np.any(ndimage.binary_erosion(flat, structure=np.ones((3, 3)))):
        return math.inf

    return level_measure(GridField(psi.grid, im), 0.0, mask)


def _gaps_ok(angles, sigma, tol=1e-12):
    if len(angles) < 2:
        return False
    gaps = np.diff(list(angles) + [angles[0] + TWO_PI])
    return bool(np.all(gaps <= math.pi - sigma + tol))


def sector_decompose(psi: GridField, sigma: float,
                     grid: Optional[Grid] = None) -> SectorDecomposition:
    """ Search for exceptional angles of `psi` such that the set where
    `arg psi` equals any of them has (numerically) zero length.

    Candidates are tried in order: the four-angle tuple implied by the cone
    condition (when all values of `psi` lie in a double cone around the
    real axis), rotated regular tuples of 4 and 3 lattice angles, and
    finally all good lattice angles reduced by `reduce_angles`.

    :returns: A decomposition; `admissible` is `False` when no candidate
              works, with `witness` the worst lattice angle.
    """
    _check_sigma(sigma)
    grid = grid or psi.grid

    max_psi = psi.max_abs()
    if max_psi == 0.0:
        return SectorDecomposition(VACUOUS_ANGLES, sigma, vacuous=True)

    tau_0 = 1e-10 * max_psi
    tau_h = 5 * grid.h
    flat_tol = 1e-12 * max_psi
    nonzero = psi.valid & (np.abs(np.nan_to_num(psi.values)) > tau_0)
    measured = {}

    def measure(kappa):
        key = round(kappa % TWO_PI, 12)
        if key not in measured:
            measured[key] = angle_measure(psi, kappa, nonzero, flat_tol)
        return measured[key]

    def table():
        keys = sorted(measured)
        values = [measured[k] for k in keys]
        return pd.DataFrame(dict(angle=keys, measure=values,
                                 good=[v < tau_h for v in values]))

    values = psi.values[nonzero]
    cone = float(np.max(np.arctan2(np.abs(np.imag(values)),
                                   np.abs(np.real(values)))))

    if cone < 0.5 * (math.pi - sigma):
        delta = 0.25 * (math.pi - sigma - 2 * cone)
        angles = (cone + delta, math.pi - cone - delta,
                  math.pi + cone + delta, TWO_PI - cone - delta)

        if all(measure(k) < tau_h for k in angles):
            return SectorDecomposition(angles, sigma, measures=table())

    lattice = [j * ANGLE_STEP for j in range(int(round(TWO_PI / ANGLE_STEP)))]
    for kappa in lattice:
        measure(kappa)

    best = None
    for count in (4, 3):
        period = int(round(TWO_PI / count / ANGLE_STEP))

        for base in range(period):
            angles = tuple(lattice[base + m * period] for m in range(count))
            worst = max(measure(k) for k in angles)

            if worst < tau_h and (best is None or worst < best[0]):
                best = (worst, angles)

        if best is not None:
            return SectorDecomposition(best[1], sigma, measures=table())

    good = [k for k in lattice if measure(k) < tau_h]
    if _gaps_ok(good, sigma):
        try:
            angles = tuple(reduce_angles(good, sigma))
            return SectorDecomposition(angles, sigma, measures=table())
        except PreconditionError as e:
            logging.warning(f'angle reduction failed: {e}')

    witness = max(lattice, key=measure)
    logging.info(f'no admissible angle tuple, witness angle {witness:.4f} '
                 f'with measure {measure(witness):.4g}')
    return SectorDecomposition((), sigma, admissible=False, witness=witness,
                               measures=table())


def reduce_angles(angles: Sequence[float], sigma: float) -> list:
    """ Remove angles while keeping every gap below `pi - sigma`, until at
    most four remain. Whenever `kappa_{k+2} - kappa_k <= pi - sigma` the
    angle `kappa_{k+1}` is redundant.

    :raises PreconditionError: if the input violates the gap bound, or if
                               no angle can be removed.
    """
    angles = sorted(float(a) for a in angles)

    if not angles or angles[-1] - angles[0] >= TWO_PI:
        raise PreconditionError('angles must span less than a full turn')

    if not _gaps_ok(angles, sigma):
        raise PreconditionError(
                f'angle gaps exceed pi - sigma = {math.pi - sigma:.6f}')

    bound = math.pi - sigma + 1e-12

    while len(angles) >= 5:
        n = len(angles)
        extended = angles + [a + TWO_PI for a in angles[:2]]

        for k in range(n):
            if extended[k + 2] - extended[k] <= bound:
                del angles[(k + 1) % n]
                break
        else:
            raise PreconditionError(
                    f'no removable angle among {n} for sigma={sigma}')

    return angles


def theta_field(psi: GridField, sectors: SectorDecomposition, k: int
                ) -> GridField:
    """ `theta_k = Re psi_k - c_k |Im psi_k|` with `psi_k = beta_k psi`. It
    is positive exactly in the interior of sector `k`, zero on its boundary
    rays and negative outside. """
    if not sectors.admissible:
        raise NotAdmissibleError(sectors.witness)

    if not 0 <= k < len(sectors):
        raise PreconditionError(f'sector index {k} out of range')

    rotated = sectors.beta(k) * psi.values
    theta = np.real(rotated) - sectors.slope(k) * np.abs(np.imag(rotated))
    return GridField(psi.grid, theta)


def theta_clamped(theta: GridField, h_band: float
                  ) -> Tuple[GridField, np.ndarray]:
    """ `min(max(theta, 0), h) / h` together with the band mask
    `{0 < theta < h}`.

    :raises PreconditionError: if `h_band <= 0`.
    """
    if not h_band > 0:
        raise PreconditionError(f'h_band must be positive, got {h_band}')

    values = np.clip(theta.values, 0.0, h_band) / h_band
    with np.errstate(invalid='ignore'):
        band = (theta.values > 0) & (theta.values < h_band)

    return GridField(theta.grid, values), band


def cutoff_tau(region: np.ndarray, h_band: float, grid: Grid) -> GridField:
    """ Smooth cutoff which vanishes within `h_band / 2` of the complement
    of `region` and equals one at distance `h_band` or more. Its gradient
    is bounded by `3 / h_band`.

    :raises ResolutionError: if `h_band <= 2 h`.
    """
    if not h_band > 2 * grid.h:
        raise ResolutionError(
                f'h_band={h_band} must exceed twice the grid spacing '
                f'{grid.h:.4g}')

    dist = distance_field(~np.asarray(region, dtype=bool), grid).values
    half = 0.5 * h_band
    values = smoothstep((dist - half) / half)
    values = np.where(grid.exterior, np.nan, values)
    return GridField(grid, values)
