from dataclasses import dataclass, field
from typing import Optional
import logging

import numpy as np

from .coefficients import Field, evaluate_matrix
from .errors import EmptyReconstructionError, PreconditionError
from .grid import gradient
from .identity import a_gradient
from .solver import divergence_operator
from .types import Grid, GridField

DIRECTIONS = ('+x1', '-x1', '+x2', '-x2')


@dataclass
class Reconstruction:
    """ A reconstructed coefficient. `mask` marks the excluded nodes, where
    `values` holds `nan`. """
    values: GridField
    mask: np.ndarray = field(repr=False)
    method: str

    @property
    def coverage(self) -> float:
        """ Fraction of the domain nodes which were reconstructed. """
        valid = self.values.grid.valid
        return float(np.count_nonzero(valid & ~self.mask) /
                     max(np.count_nonzero(valid), 1))

    def relative_error(self, reference) -> float:
        """ `max |c - c_ref| / max |c_ref|` over the reconstructed nodes. """
        grid = self.values.grid
        ref = _values(reference, grid)
        ok = ~self.mask & np.isfinite(self.values.values) & np.isfinite(ref)
        if not np.any(ok):
            raise EmptyReconstructionError('no reconstructed nodes to compare')

        error = np.max(np.abs(self.values.values[ok] - ref[ok]))
        scale = np.max(np.abs(ref[ok]))
        return float(error / scale) if scale > 0 else float(error)

    def to_dict(self) -> dict:
        return dict(method=self.method, coverage=self.coverage,
                    masked=int(np.count_nonzero(self.mask &
                                                self.values.grid.valid)))


def _values(f, grid: Grid) -> np.ndarray:
    if isinstance(f, Field):
        return f.evaluate(grid).values
    if isinstance(f, GridField):
        return f.values
    return np.broadcast_to(np.asarray(f), grid.shape)


def reconstruct_rho(u: GridField, gamma, A, omega2: float,
                    grid: Optional[Grid] = None, u_floor: float = 0.1
                    ) -> Reconstruction:
    """ Recover `rho = -div(gamma A grad u) / (omega2 u)` from an interior
    measurement `u`, using the stencil of the forward solver.

    Nodes with `|u| < u_floor max |u|` and the boundary nodes are masked.

    :raises PreconditionError: if `omega2 <= 0`.
    :raises EmptyReconstructionError: if every node is masked.
    """
    if not omega2 > 0:
        raise PreconditionError(f'omega2 must be positive, got {omega2}')

    grid = grid or u.grid
    K = evaluate_matrix(A, grid) * _values(gamma, grid)[None, None, :, :]
    operator = divergence_operator(K, grid)

    values = np.nan_to_num(u.values.ravel().astype(complex))
    flux = np.full(grid.size, np.nan, dtype=complex)
    flux[np.flatnonzero(grid.interior.ravel())] = operator @ values
    flux = flux.reshape(grid.shape)

    magnitude = np.abs(u.values)
    floor = u_floor * u.max_abs()
    with np.errstate(invalid='ignore'):
        mask = ~grid.interior | ~(magnitude >= floor) | (magnitude == 0)

    if np.all(mask):
        raise EmptyReconstructionError(
                f'|u| is below the floor {floor:.3g} on every interior node')

    rho = np.full(grid.shape, np.nan, dtype=complex)
    rho[~mask] = -flux[~mask] / (omega2 * u.values[~mask])

    if not np.any(np.imag(rho[~mask])):
        rho = np.real(rho)

    masked = int(np.count_nonzero(mask & grid.interior))
    if masked:
        logging.warning(f'reconstruct_rho: {masked} interior node(s) masked '
                        f'where |u| < {floor:.3g}')

    return Reconstruction(GridField(grid, rho), mask, 'rho')


def _orient(array: np.ndarray, direction: str) -> np.ndarray:
    """ View of a node array in which marching runs along increasing
    column index. """
    if direction in ('+x2', '-x2'):
        array = array.T
    if direction.startswith('-'):
        array = array[:, ::-1]
    return array


def _unorient(array: np.ndarray, direction: str) -> np.ndarray:
    if direction.startswith('-'):
        array = array[:, ::-1]
    if direction in ('+x2', '-x2'):
        array = array.T
    return np.ascontiguousarray(array)


def _transverse_difference(g: np.ndarray, velocity: np.ndarray, h: float
                           ) -> np.ndarray:
    """ Upwind difference of one column of `g` along the transverse axis. """
    up = np.full_like(g, np.nan)
    down = np.full_like(g, np.nan)
    up[1:] = (g[1:] - g[:-1]) / h
    down[:-1] = (g[1:] - g[:-1]) / h

    result = np.where(np.real(velocity) > 0, up, down)
    # fall back to the other side at the edge of the valid region
    result = np.where(np.isfinite(result), result,
                      np.where(np.isfinite(up), up, down))
    return np.nan_to_num(result)


def reconstruct_gamma_march(u: GridField, rho, A, omega2: float,
                            gamma_boundary, grid: Optional[Grid] = None,
                            grad_floor: float = 0.1,
                            direction: str = '+x1') -> Reconstruction:
    """ Recover `gamma` from `u` by marching the transport relation

        (A grad u) . grad gamma + gamma div(A grad u) = -omega2 rho u

    along grid lines from the inflow boundary, with a Heun step along the
    marching direction and upwinded transverse differences.

    Nodes where the marching coefficient `|(A grad u) . e|` is below
    `grad_floor` times its maximum, or where the transverse CFL number
    exceeds one, are masked together with every node downstream of them on
    the same grid line.

    :param gamma_boundary: `gamma` on the inflow boundary, a field or node
                           values.
    :param direction: One of `+x1`, `-x1`, `+x2`, `-x2`.
    :raises PreconditionError: if the inflow values are missing.
    :raises EmptyReconstructionError: if every node is masked.
    """
    if direction not in DIRECTIONS:
        raise PreconditionError(f'direction must be one of {DIRECTIONS}, got '
                                f'{direction!r}')

    if gamma_boundary is None:
        raise PreconditionError('inflow boundary values of gamma are missing')

    grid = grid or u.grid
    q1, q2 = a_gradient(u, A, grid)
    div = gradient(GridField(grid, q1))[0].values + \
        gradient(GridField(grid, q2))[1].values
    source = -omega2 * _values(rho, grid) * u.values
    inflow = _values(gamma_boundary, grid)

    along, across = (q1, q2) if direction in ('+x1', '-x1') else (q2, q1)
    h_s, h_t = (grid.hx, grid.hy) if direction in ('+x1', '-x1') else \
        (grid.hy, grid.hx)
    sign = -1.0 if direction.startswith('-') else 1.0

    a = _orient(sign * along, direction)
    b = _orient(across, direction)
    D = _orient(div, direction)
    F = _orient(source, direction)
    G0 = _orient(inflow, direction)
    valid = _orient(grid.valid, direction)

    finite = np.isfinite(a)
    peak = np.max(np.abs(a[finite & valid]), initial=0.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        velocity = np.where(np.abs(a) > 0, b / a, np.inf)
        cfl = np.abs(np.real(velocity)) * h_s / h_t
        weak = ~(np.abs(a) >= grad_floor * peak) | ~(cfl <= 1)

    n_lines, n_steps = a.shape
    gamma = np.full(a.shape, np.nan, dtype=complex)
    tainted = np.zeros(n_lines, dtype=bool)
    started = np.zeros(n_lines, dtype=bool)
    mask = np.ones(a.shape, dtype=bool)

    def slope(j, g):
        dt = _transverse_difference(g, velocity[:, j], h_t)
        with np.errstate(divide='ignore', invalid='ignore'):
            return (F[:, j] - g * D[:, j] - b[:, j] * dt) / a[:, j]

    for j in range(n_steps):
        start = valid[:, j] & ~started
        if np.any(start & ~np.isfinite(G0[:, j])):
            raise PreconditionError(
                    f'inflow boundary values of gamma are missing on '
                    f'{int(np.count_nonzero(start & ~np.isfinite(G0[:, j])))}'
                    f' node(s)')

        gamma[start, j] = G0[start, j]
        started |= start

        if j > 0:
            step = valid[:, j] & valid[:, j - 1] & ~start
            prev = np.where(valid[:, j - 1], gamma[:, j - 1], np.nan)
            k1 = slope(j - 1, prev)
            predicted = prev + h_s * k1
            k2 = slope(j, predicted)
            update = prev + 0.5 * h_s * (k1 + k2)
            gamma[step, j] = update[step]

        tainted |= valid[:, j] & weak[:, j] & ~start
        tainted &= valid[:, j]
        mask[:, j] = ~valid[:, j] | tainted | ~np.isfinite(gamma[:, j])

    if np.all(mask):
        raise EmptyReconstructionError(
                'the marching coefficient is below the floor everywhere')

    gamma = _unorient(gamma, direction)
    mask = _unorient(mask, direction)
    gamma[mask] = np.nan
    if not np.any(np.imag(gamma[~mask])):
        gamma = np.real(gamma)

    masked = int(np.count_nonzero(mask & grid.valid))
    if masked:
        logging.warning(f'reconstruct_gamma_march: {masked} node(s) masked '
                        f'downstream of a weak marching coefficient')

    return Reconstruction(GridField(grid, gamma), mask,
                          f'gamma_march{direction}')
