from dataclasses import dataclass, asdict
from typing import Optional, Tuple
import logging
import math
import time

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .coefficients import ProblemSpec, evaluate_matrix, min_eigenvalue
from .errors import ResonanceError
from .types import Grid, GridField


@dataclass
class LinearSystem:
    """ The discrete Dirichlet problem restricted to the interior nodes.

    `matrix @ u_interior = rhs`, where `rhs = -coupling @ known_values`
    eliminates the Dirichlet values on the boundary nodes. `operator` is
    the full stencil (interior rows, all node columns).
    """
    matrix: sps.csr_matrix
    rhs: np.ndarray
    coupling: sps.csr_matrix
    operator: sps.csr_matrix
    interior_index: np.ndarray
    known_index: np.ndarray
    known_values: np.ndarray
    grid: Grid


@dataclass
class SolveReport:
    solver: str
    iterations: int
    residual: float
    wall_time: float
    condition_estimate: Optional[float] = None
    smallest_eigenvalue: Optional[complex] = None

    def to_dict(self) -> dict:
        return asdict(self)


def divergence_operator(K: np.ndarray, grid: Grid, shift=None
                        ) -> sps.csr_matrix:
    """ Flux-form discretization of `div(K grad u) + shift * u` with face
    averaged coefficients.

    :param K: Coefficient matrix field of shape `(2, 2, ny, nx)`.
    :param shift: Optional node field added on the diagonal.
    :returns: Sparse matrix with one row per interior node (row-major
              order) and one column per grid node.
    """
    ny, nx = grid.shape
    hx, hy = grid.hx, grid.hy
    iy, ix = np.nonzero(grid.interior)
    rows = np.arange(len(iy))

    def node(dy, dx):
        return (iy + dy) * nx + (ix + dx)

    def face(k, dy, dx):
        return 0.5 * (k[iy, ix] + k[iy + dy, ix + dx])

    k11, k12, k21, k22 = K[0, 0], K[0, 1], K[1, 0], K[1, 1]
    k11e, k11w = face(k11, 0, 1), face(k11, 0, -1)
    k22n, k22s = face(k22, 1, 0), face(k22, -1, 0)

    entries = [
        (node(0, 0), -(k11e + k11w) / hx ** 2 - (k22n + k22s) / hy ** 2),
        (node(0, 1), k11e / hx ** 2),
        (node(0, -1), k11w / hx ** 2),
        (node(1, 0), k22n / hy ** 2),
        (node(-1, 0), k22s / hy ** 2),
    ]

    if np.any(k12[grid.valid]) or np.any(k21[grid.valid]):
        c = 1.0 / (4 * hx * hy)
        k12e, k12w = face(k12, 0, 1), face(k12, 0, -1)
        k21n, k21s = face(k21, 1, 0), face(k21, -1, 0)

        entries += [
            (node(0, 1), (k21n - k21s) * c),
            (node(0, -1), -(k21n - k21s) * c),
            (node(1, 0), (k12e - k12w) * c),
            (node(-1, 0), -(k12e - k12w) * c),
            (node(1, 1), (k12e + k21n) * c),
            (node(-1, 1), -(k12e + k21s) * c),
            (node(1, -1), -(k12w + k21n) * c),
            (node(-1, -1), (k12w + k21s) * c),
        ]

    if shift is not None:
        entries.append((node(0, 0), shift[iy, ix]))

    cols = np.concatenate([e[0] for e in entries])
    vals = np.concatenate([np.broadcast_to(e[1], iy.shape) for e in entries])
    allrows = np.tile(rows, len(entries))

    matrix = sps.coo_matrix((vals.astype(complex), (allrows, cols)),
                            shape=(len(iy), grid.size)).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def helmholtz_operator(spec: ProblemSpec, grid: Grid) -> sps.csr_matrix:
    """ Stencil of `div(gamma A grad u) + omega2 rho u` on interior rows. """
    gamma = spec.gamma.evaluate(grid).values
    K = evaluate_matrix(spec.A, grid) * gamma[None, None, :, :]
    shift = None

    if spec.omega2 != 0:
        shift = spec.omega2 * spec.rho.evaluate(grid).values

    return divergence_operator(K, grid, shift)


def assemble(spec: ProblemSpec, grid: Grid) -> LinearSystem:
    """ Assemble the Dirichlet problem of `spec` on `grid`.

    :raises AssemblyError: if a sample of `A` is not Hermitian positive
                           definite.
    """
    spec.validate(grid, check_bounds=False)
    operator = helmholtz_operator(spec, grid)

    interior_index = np.flatnonzero(grid.interior.ravel())
    known_index = np.flatnonzero(grid.boundary.ravel())
    known_values = spec.boundary_values(grid)

    csc = operator.tocsc()
    matrix = csc[:, interior_index].tocsr()
    coupling = csc[:, known_index].tocsr()
    matrix.sort_indices()
    coupling.sort_indices()
    rhs = -(coupling @ known_values)

    return LinearSystem(matrix, rhs, coupling, operator, interior_index,
                        known_index, known_values, grid)


def _stiffness_scale(spec: ProblemSpec, grid: Grid) -> float:
    mask = grid.valid
    K = evaluate_matrix(spec.A, grid)[:, :, mask]
    gamma = np.real(spec.gamma.evaluate(grid).values[mask])
    lam = float(np.min(min_eigenvalue(K) * gamma))
    xmin, xmax, ymin, ymax = grid.domain.bounds
    return lam * math.pi ** 2 * (1 / (xmax - xmin) ** 2 +
                                 1 / (ymax - ymin) ** 2)


def _smallest_eigenvalue(matrix, lu) -> Optional[complex]:
    n = matrix.shape[0]

    if n < 3:
        values = np.linalg.eigvals(matrix.toarray())
        return complex(values[np.argmin(np.abs(values))])

    inverse = spla.LinearOperator(matrix.shape, matvec=lu.solve,
                                  dtype=complex)
    try:
        values = spla.eigs(matrix, k=1, sigma=0, OPinv=inverse, which='LM',
                           v0=np.ones(n, dtype=complex), tol=1e-8,
                           return_eigenvectors=False)
    except spla.ArpackNoConvergence:
        logging.warning('eigenvalue estimate did not converge')
        return None

    return complex(values[0])


def _condition_estimate(matrix, lu) -> float:
    inverse = spla.LinearOperator(
            matrix.shape, dtype=complex,
            matvec=lu.solve,
            rmatvec=lambda b: lu.solve(b, trans='H'))
    norm = float(abs(matrix).sum(axis=0).max())

    # onenormest draws from the global generator
    state = np.random.get_state()
    try:
        np.random.seed(0)
        return norm * float(spla.onenormest(inverse))
    finally:
        np.random.set_state(state)


def _solve_direct(system: LinearSystem):
    try:
        lu = spla.splu(system.matrix.tocsc())
    except RuntimeError as e:
        raise ResonanceError(f'singular factorization: {e}') from e

    x = lu.solve(system.rhs.astype(complex))
    return x, lu


def _solve_iterative(system: LinearSystem, tol: float):
    matrix = system.matrix.tocsc()
    try:
        ilu = spla.spilu(matrix, drop_tol=1e-6, fill_factor=20)
        M = spla.LinearOperator(matrix.shape, ilu.solve, dtype=complex)
    except RuntimeError as e:
        raise ResonanceError(f'singular preconditioner: {e}') from e

    iterations = [0]

    def callback(_):
        iterations[0] += 1

    x, info = spla.gmres(matrix, system.rhs.astype(complex), M=M, rtol=tol,
                         atol=0.0, restart=100, maxiter=200,
                         callback=callback, callback_type='pr_norm')

    if info != 0:
        raise ResonanceError(
                f'gmres did not converge (info={info}); the problem may be '
                f'vibrating')

    return x, iterations[0]


def solve_forward(spec: ProblemSpec, grid: Grid, tol: float = 1e-10,
                  direct_max_cells: int = 256, resonance_tol: float = 1e-2,
                  check_resonance: bool = True
                  ) -> Tuple[GridField, SolveReport]:
    """ Solve the Dirichlet problem of `spec` on `grid`.

    A sparse LU factorization is used up to `direct_max_cells` cells per
    axis, preconditioned GMRES otherwise. With the direct solver the
    eigenvalue of smallest magnitude is estimated by shift-invert; it is
    resonant if that eigenvalue is below `resonance_tol` times the scale
    of the operator.

    :returns: The solution (equal to `g` on boundary nodes, `nan` outside)
              and a `SolveReport`.
    :raises ResonanceError: on a singular or resonant system.
    """
    start = time.perf_counter()
    system = assemble(spec, grid)
    lu = None

    if grid.n_cells <= direct_max_cells:
        try:
            x, lu = _solve_direct(system)
            solver, iterations = 'splu', 1
        except MemoryError:
            logging.warning('sparse LU ran out of memory, falling back to '
                            'gmres')

    if lu is None:
        x, iterations = _solve_iterative(system, tol)
        solver = 'gmres'

    if not np.all(np.isfinite(x)):
        raise ResonanceError('solution contains non-finite values')

    norm_b = np.linalg.norm(system.rhs)
    residual = np.linalg.norm(system.matrix @ x - system.rhs)
    residual = float(residual / norm_b) if norm_b > 0 else float(residual)

    eigenvalue, condition = None, None
    if lu is not None and check_resonance:
        eigenvalue = _smallest_eigenvalue(system.matrix, lu)
        condition = _condition_estimate(system.matrix, lu)

        if eigenvalue is not None:
            rho_max = spec.rho.evaluate(grid).max_abs()
            scale = max(spec.omega2 * rho_max, _stiffness_scale(spec, grid))

            if abs(eigenvalue) < resonance_tol * scale:
                raise ResonanceError(
                    f'near-singular operator: smallest eigenvalue '
                    f'{abs(eigenvalue):.3g} relative to scale {scale:.3g}')

    values = np.full(grid.size, np.nan, dtype=complex)
    values[system.known_index] = system.known_values
    values[system.interior_index] = x
    u = GridField(grid, values.reshape(grid.shape))

    report = SolveReport(solver, int(iterations), residual,
                         time.perf_counter() - start, condition, eigenvalue)
    logging.info(f'solved {grid!r} with {solver}: residual {residual:.3g}')
    return u, report


def pde_residual(u: GridField, spec: ProblemSpec, grid: Optional[Grid] = None
                 ) -> float:
    """ L1 norm over the interior nodes of the discrete
    `div(gamma A grad u) + omega2 rho u`. """
    grid = grid or u.grid
    operator = helmholtz_operator(spec, grid)
    values = np.nan_to_num(u.values.ravel().astype(complex))
    r = operator @ values
    return float(np.sum(np.abs(r)) * grid.hx * grid.hy)
