from typing import Optional, Tuple
import math

import numpy as np
from scipy import ndimage
from skimage import measure

from .errors import ExponentError, MaskedValueError, PreconditionError
from .types import Domain, Grid, GridField, ShrinkSet


def build_grid(domain: Domain, n_cells: int) -> Grid:
    """ Build a uniform grid with `n_cells` cells per axis over the bounding
    box of the given domain.

    :raises InvalidResolutionError: if `n_cells < 2`.
    """
    return Grid(domain, n_cells)


def _region(f: GridField, region):
    if region is None:
        return f.grid.valid
    if isinstance(region, ShrinkSet):
        return region.mask
    return np.asarray(region, dtype=bool)


def integrate(f: GridField, region=None) -> complex:
    """ Integrate `f` over the masked nodes using the grid quadrature
    weights.

    :param region: Node mask (or `ShrinkSet`). Defaults to every interior
                   and boundary node.
    :raises MaskedValueError: if the mask contains nodes where `f` is not
                              valid.
    """
    mask = _region(f, region)
    values = f.values[mask]

    if not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(values)))
        raise MaskedValueError(f'region contains {bad} invalid node(s)')

    result = np.sum(values * f.grid.weights[mask])
    if np.iscomplexobj(result):
        return complex(result)
    return float(result)


def gradient(f: GridField) -> Tuple[GridField, GridField]:
    """ Second-order finite-difference gradient `(df/dx1, df/dx2)`. Central
    differences inside, one-sided differences at the edge of the grid.
    Invalid nodes propagate to their neighbours. """
    grid = f.grid
    dy, dx = np.gradient(f.values, grid.hy, grid.hx, edge_order=2)
    return GridField(grid, dx), GridField(grid, dy)


def hessian(f: GridField) -> Tuple[GridField, GridField, GridField]:
    """ Compact central second differences `(f_11, f_12, f_22)`. The
    outermost node layer is invalid. """
    derivs = _compact_derivatives(f)
    return derivs['11'], derivs['12'], derivs['22']


def _compact_derivatives(f: GridField) -> dict:
    grid = f.grid
    v = f.values
    hx, hy = grid.hx, grid.hy

    def empty():
        return np.full(grid.shape, np.nan, dtype=v.dtype)

    d1, d2, d11, d12, d22 = (empty() for _ in range(5))
    c = (slice(1, -1), slice(1, -1))

    d1[c] = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * hx)
    d2[c] = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * hy)
    d11[c] = (v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]) / hx ** 2
    d22[c] = (v[2:, 1:-1] - 2 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / hy ** 2
    d12[c] = (v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]) / \
        (4 * hx * hy)

    return {key: GridField(grid, value) for key, value in
            zip(('1', '2', '11', '12', '22'), (d1, d2, d11, d12, d22))}


def _derivative_integral(values, weights, mask, power=1):
    ok = mask & np.isfinite(values)
    return float(np.sum(np.abs(values[ok]) ** power * weights[ok]))


def _derivative_max(values, mask):
    ok = mask & np.isfinite(values)
    if not np.any(ok):
        return 0.0
    return float(np.max(np.abs(values[ok])))


def norm(f: GridField, kind: str, region=None, s: Optional[float] = None
         ) -> float:
    """ Discrete norm of `f` over a region.

    Supported kinds are `Linf`, `L1`, `W1s` (requires `s`), `W11` and `W21`.
    Derivatives are compact central differences; their stencils never reach
    the outermost node layer, so derivative terms only count nodes where the
    stencil is valid.

    :param s: Exponent of the `W1s` norm. Must exceed the dimension (2);
              `math.inf` gives the `W^{1,inf}` norm.
    :raises ExponentError: for `W1s` with `s <= 2`.
    :raises MaskedValueError: if `f` is invalid on the region.
    """
    mask = _region(f, region)
    weights = f.grid.weights

    if kind == 'W1s':
        if s is None or s <= 2:
            raise ExponentError(
                f'W1s norm requires s > 2 in two dimensions, got s={s}')

    if not np.all(np.isfinite(f.values[mask])):
        bad = int(np.count_nonzero(~np.isfinite(f.values[mask])))
        raise MaskedValueError(f'region contains {bad} invalid node(s)')

    if kind == 'Linf':
        return f.max_abs(mask)

    if kind == 'L1':
        return float(np.sum(np.abs(f.values[mask]) * weights[mask]))

    derivs = _compact_derivatives(f)

    if kind == 'W1s':
        terms = [f.values, derivs['1'].values, derivs['2'].values]

        if math.isinf(s):
            return max(_derivative_max(t, mask) for t in terms)

        total = sum(_derivative_integral(t, weights, mask, power=s)
                    for t in terms)
        return float(total ** (1.0 / s))

    if kind == 'W11':
        keys = ('1', '2')
    elif kind == 'W21':
        keys = ('1', '2', '11', '12', '22')
    else:
        raise PreconditionError(f'unknown norm kind: {kind!r}')

    total = _derivative_integral(f.values, weights, mask)
    for key in keys:
        total += _derivative_integral(derivs[key].values, weights, mask)

    return float(total)


def distance_field(mask: np.ndarray, grid: Grid) -> GridField:
    """ Exact Euclidean distance from every node to the nearest node of
    `mask`. An empty mask gives `inf` at every node. """
    mask = np.asarray(mask, dtype=bool)

    if not np.any(mask):
        return GridField(grid, np.full(grid.shape, np.inf))

    dist = ndimage.distance_transform_edt(~mask, sampling=(grid.hy, grid.hx))
    return GridField(grid, dist)


def level_measure(f: GridField, t: float, region=None) -> float:
    """ Length of the level set `{f = t}` inside the region, computed by
    marching squares with linear interpolation. Only cells whose four
    corners are in the region (and valid) contribute.

    :param f: A real-valued field.
    """
    if np.iscomplexobj(f.values):
        assert f.is_real, 'level_measure expects a real-valued field'

    grid = f.grid
    values = np.real(f.values)
    mask = _region(f, region) & np.isfinite(values)

    if not np.any(mask):
        return 0.0

    values = np.where(mask, values, t)
    contours = measure.find_contours(values, level=t, mask=mask)
    total = 0.0

    for contour in contours:
        drow = np.diff(contour[:, 0]) * grid.hy
        dcol = np.diff(contour[:, 1]) * grid.hx
        total += float(np.sum(np.hypot(drow, dcol)))

    return total


def shrink_set(grid: Grid, depth: float) -> ShrinkSet:
    """ Nodes whose distance to the complement of the domain exceeds
    `depth`.

    :raises PreconditionError: if `depth` is not positive.
    """
    if not depth > 0:
        raise PreconditionError(f'shrink depth must be positive, got {depth}')

    dist = grid.domain.boundary_distance(grid.X, grid.Y)
    mask = (dist > depth) & grid.interior
    mask.setflags(write=False)
    return ShrinkSet(float(depth), mask)
