from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Tuple
import logging
import math
import re

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr, standard_transformations, \
        convert_xor

from .errors import AssemblyError, ContinuityError, CoverageError, \
        GrammarError, PreconditionError, SpecificationError
from .grid import norm
from .types import Grid, GridField

X1, X2 = sympy.symbols('x1 x2', real=True)

CONTINUITY_CLASSES = ('piecewise', 'C0', 'C1', 'analytic')

_TOKEN = re.compile(r'''
    \s*(?:
        (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<op>[-+*/^()])
    )''', re.VERBOSE)

_NAMES = {
    'sin': sympy.sin,
    'cos': sympy.cos,
    'exp': sympy.exp,
    're': sympy.re,
    'im': sympy.im,
    'i': sympy.I,
    'x1': X1,
    'x2': X2,
}


def parse_expression(text: str) -> sympy.Expr:
    """ Parse an expression of the coefficient grammar: numbers, the
    operators `+ - * / ^`, parentheses, the functions `sin`, `cos`, `exp`,
    `re`, `im`, the imaginary unit `i` and the coordinates `x1`, `x2`.

    :raises GrammarError: for anything outside the grammar.
    """
    text = str(text)
    pos = 0

    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None or match.end() == pos:
            if text[pos:].strip() == '':
                break
            raise GrammarError(f'unexpected character at {pos} in {text!r}')

        name = match.group('name')
        if name is not None and name not in _NAMES:
            raise GrammarError(f'unknown name {name!r} in {text!r}')

        pos = match.end()

    if not text.strip():
        raise GrammarError('empty expression')

    try:
        transformations = standard_transformations + (convert_xor,)
        expr = parse_expr(text, local_dict=dict(_NAMES),
                          global_dict={'Integer': sympy.Integer,
                                       'Float': sympy.Float,
                                       'Rational': sympy.Rational,
                                       'Symbol': sympy.Symbol},
                          transformations=transformations)
    except Exception as e:
        raise GrammarError(f'invalid expression {text!r}: {e}') from e

    if not isinstance(expr, sympy.Expr) or \
            not expr.free_symbols <= {X1, X2}:
        raise GrammarError(f'invalid expression {text!r}')

    return expr


def _lambdify(expr: sympy.Expr):
    fun = sympy.lambdify((X1, X2), expr, modules='numpy')

    def evaluate(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        with np.errstate(all='ignore'):
            result = np.asarray(fun(x, y))
        return np.broadcast_to(result, np.broadcast(x, y).shape)

    return evaluate


class Region:
    """ Closed region predicate of a piece: the whole plane, a half-plane
    `{n . x >= offset}` or a disk `{|x - center| <= radius}`. With
    `complement`, the open complement is used instead. """

    def __init__(self, kind='all', normal=(1.0, 0.0), offset=0.0,
                 center=(0.0, 0.0), radius=1.0, complement=False):
        if kind not in ('all', 'halfplane', 'disk'):
            raise GrammarError(f'unknown region type: {kind!r}')

        if kind == 'halfplane' and not np.any(normal):
            raise GrammarError('half-plane normal must be nonzero')

        if kind == 'disk' and not radius > 0:
            raise GrammarError('disk region radius must be positive')

        self.kind = kind
        self.normal = tuple(map(float, normal))
        self.offset = float(offset)
        self.center = tuple(map(float, center))
        self.radius = float(radius)
        self.complement = bool(complement)

    @staticmethod
    def parse(data) -> "Region":
        if data is None:
            return Region()

        data = dict(data)
        params = data.pop('params', {}) or {}
        data.update(params)
        kind = data.pop('type', 'all')
        allowed = {'normal', 'offset', 'center', 'radius', 'complement'}
        unknown = set(data) - allowed
        if unknown:
            raise GrammarError(f'unknown region parameter(s): {sorted(unknown)}')

        return Region(kind, **data)

    def to_dict(self) -> dict:
        if self.kind == 'all':
            return dict(type='all')
        if self.kind == 'halfplane':
            result = dict(type='halfplane', normal=list(self.normal),
                          offset=self.offset)
        else:
            result = dict(type='disk', center=list(self.center),
                          radius=self.radius)
        if self.complement:
            result['complement'] = True
        return result

    def contains(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)

        if self.kind == 'all':
            return np.ones(np.broadcast(x, y).shape, dtype=bool)
        elif self.kind == 'halfplane':
            n1, n2 = self.normal
            inside = n1 * x + n2 * y >= self.offset
        else:
            cx, cy = self.center
            inside = np.hypot(x - cx, y - cy) <= self.radius

        return ~inside if self.complement else inside

    @property
    def interface(self) -> Optional[tuple]:
        """ Canonical description of the boundary curve, or `None`. """
        if self.kind == 'halfplane':
            n1, n2 = self.normal
            scale = math.hypot(n1, n2)
            n1, n2, c = n1 / scale, n2 / scale, self.offset / scale
            if n1 < 0 or (n1 == 0 and n2 < 0):
                n1, n2, c = -n1, -n2, -c
            return ('line', round(n1, 12), round(n2, 12), round(c, 12))
        if self.kind == 'disk':
            return ('circle', round(self.center[0], 12),
                    round(self.center[1], 12), round(self.radius, 12))
        return None

    def interface_samples(self, bounds, count=64):
        """ Points on the boundary curve together with unit normals. """
        xmin, xmax, ymin, ymax = bounds

        if self.kind == 'halfplane':
            n = np.array(self.normal) / math.hypot(*self.normal)
            base = n * self.offset / math.hypot(*self.normal)
            tangent = np.array([-n[1], n[0]])
            extent = math.hypot(xmax - xmin, ymax - ymin) + np.abs(base).sum()
            s = np.linspace(-extent, extent, 8 * count)
            points = base[None, :] + s[:, None] * tangent[None, :]
            normals = np.repeat(n[None, :], len(s), axis=0)
        elif self.kind == 'disk':
            phi = np.linspace(0, 2 * np.pi, count, endpoint=False)
            normals = np.stack([np.cos(phi), np.sin(phi)], axis=1)
            points = np.array(self.center)[None, :] + self.radius * normals
        else:
            return np.zeros((0, 2)), np.zeros((0, 2))

        keep = (points[:, 0] >= xmin) & (points[:, 0] <= xmax) & \
            (points[:, 1] >= ymin) & (points[:, 1] <= ymax)
        points, normals = points[keep], normals[keep]

        if len(points) > count:
            index = np.linspace(0, len(points) - 1, count).round().astype(int)
            points, normals = points[index], normals[index]

        return points, normals


class Field(ABC):
    """ Base class of coefficient fields: anything evaluable on a grid.
    Fields support `+`, `-` and multiplication by scalars. """

    @abstractmethod
    def evaluate(self, grid: Grid) -> GridField:
        pass

    @abstractmethod
    def evaluate_at(self, x, y) -> np.ndarray:
        pass

    def __add__(self, other):
        return FieldCombination([(1.0, self), (1.0, as_field(other))])

    def __radd__(self, other):
        return FieldCombination([(1.0, as_field(other)), (1.0, self)])

    def __sub__(self, other):
        return FieldCombination([(1.0, self), (-1.0, as_field(other))])

    def __rsub__(self, other):
        return FieldCombination([(1.0, as_field(other)), (-1.0, self)])

    def __mul__(self, scale):
        if isinstance(scale, Field):
            return NotImplemented
        return FieldCombination([(complex(scale), self)])

    def __rmul__(self, scale):
        return self.__mul__(scale)

    def __neg__(self):
        return self * -1.0

    @property
    def interfaces(self) -> frozenset:
        return frozenset()


class FieldCombination(Field):
    """ Linear combination `sum(scale * field)` of fields, evaluated lazily.
    """

    def __init__(self, terms):
        self.terms = [(complex(scale), f) for scale, f in terms]

    def evaluate(self, grid: Grid) -> GridField:
        result = None

        for scale, f in self.terms:
            values = f.evaluate(grid).values
            term = values * scale if scale != 1 else values
            result = term if result is None else result + term

        if np.iscomplexobj(result) and not np.any(np.imag(result)):
            result = np.real(result)

        return GridField(grid, result)

    def evaluate_at(self, x, y) -> np.ndarray:
        result = 0
        for scale, f in self.terms:
            result = result + scale * f.evaluate_at(x, y)
        return np.asarray(result, dtype=complex)

    @property
    def interfaces(self) -> frozenset:
        result = frozenset()
        for _, f in self.terms:
            result |= f.interfaces
        return result

    def __repr__(self):
        return f'<FieldCombination of {len(self.terms)} terms>'


@dataclass
class Piece:
    expr: sympy.Expr
    region: Region
    text: str = ''
    _fun: object = field(default=None, repr=False)

    def __call__(self, x, y):
        if self._fun is None:
            self._fun = _lambdify(self.expr)
        return self._fun(x, y)


class CoefficientField(Field):
    """ A piecewise-analytic complex field. Each piece is a closed-form
    expression of the coefficient grammar together with a region predicate;
    a node takes the value of the first piece whose region contains it.

    The continuity class (`piecewise`, `C0`, `C1` or `analytic`) is checked
    at construction by comparing neighbouring pieces along their interfaces.
    """

    def __init__(self, pieces: List[Piece], continuity: str = 'piecewise',
                 check: bool = True, bounds=(-10.0, 10.0, -10.0, 10.0)):
        if not pieces:
            raise GrammarError('a coefficient field needs at least one piece')

        if continuity not in CONTINUITY_CLASSES:
            raise GrammarError(f'unknown continuity class: {continuity!r}')

        self.pieces = list(pieces)
        self.continuity = continuity

        if check and len(self.pieces) > 1:
            self.check_continuity(bounds)

    @staticmethod
    def constant(value) -> "CoefficientField":
        value = complex(value)
        text = repr(value.real) if value.imag == 0 else \
            f'{value.real!r}+({value.imag!r})*i'
        return CoefficientField([Piece(parse_expression(text), Region(),
                                       text)], 'analytic')

    @staticmethod
    def parse(data, bounds=(-10.0, 10.0, -10.0, 10.0)) -> "Field":
        """ Build a field from a number, an expression string, or a JSON
        object `{"pieces": [{"expr": ..., "region": ...}], "continuity":
        ...}`.
        """
        if isinstance(data, Field):
            return data

        if isinstance(data, (int, float, complex)) and \
                not isinstance(data, bool):
            return CoefficientField.constant(data)

        if isinstance(data, str):
            return CoefficientField([Piece(parse_expression(data), Region(),
                                           data)], 'analytic')

        if isinstance(data, dict):
            if 're' in data and set(data) <= {'re', 'im'}:
                return CoefficientField.constant(
                        complex(data['re'], data.get('im', 0.0)))

            if 'expr' in data and 'pieces' not in data:
                data = dict(pieces=[data])

            unknown = set(data) - {'pieces', 'continuity'}
            if unknown:
                raise GrammarError(f'unknown field key(s): {sorted(unknown)}')

            pieces = []
            for item in data.get('pieces') or []:
                if 'expr' not in item:
                    raise GrammarError('field piece lacks "expr"')
                text = str(item['expr'])
                pieces.append(Piece(parse_expression(text),
                                    Region.parse(item.get('region')), text))

            return CoefficientField(pieces,
                                    data.get('continuity', 'piecewise'),
                                    bounds=bounds)

        raise GrammarError(f'cannot interpret {data!r} as a coefficient field')

    def to_dict(self) -> dict:
        return dict(
            pieces=[dict(expr=p.text or str(p.expr),
                         region=p.region.to_dict()) for p in self.pieces],
            continuity=self.continuity,
        )

    @property
    def interfaces(self) -> frozenset:
        return frozenset(p.region.interface for p in self.pieces
                         if p.region.interface is not None)

    def piece_index(self, x, y) -> np.ndarray:
        """ Index of the first piece containing each point, `-1` if none. """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        index = np.full(np.broadcast(x, y).shape, -1)

        for i, piece in reversed(list(enumerate(self.pieces))):
            index[piece.region.contains(x, y)] = i

        return index

    def evaluate_at(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        index = self.piece_index(x, y)
        values = np.full(index.shape, np.nan, dtype=complex)

        for i, piece in enumerate(self.pieces):
            hit = index == i
            if np.any(hit):
                values[hit] = piece(x[hit], y[hit])

        return values

    def evaluate(self, grid: Grid) -> GridField:
        """ Evaluate on all interior and boundary nodes; exterior nodes hold
        `nan`. Boundary nodes not covered by any piece use the nearest point
        of the domain boundary.

        :raises CoverageError: if an interior node is not covered.
        """
        X, Y = grid.X.copy(), grid.Y.copy()
        index = self.piece_index(X, Y)

        uncovered = (index < 0) & grid.boundary
        if np.any(uncovered):
            px, py = grid.domain.project(X[uncovered], Y[uncovered])
            X[uncovered], Y[uncovered] = px, py

        values = self.evaluate_at(X, Y)
        missing = ~np.isfinite(values) & grid.valid
        if np.any(missing):
            iy, ix = np.argwhere(missing)[0]
            raise CoverageError(
                f'node ({grid.x[ix]:.6g}, {grid.y[iy]:.6g}) is not covered '
                f'by any piece')

        values[grid.exterior] = np.nan
        if not np.any(np.imag(values[grid.valid])):
            values = np.real(values)

        return GridField(grid, values)

    def check_continuity(self, bounds, tol: float = 1e-8):
        """ Check the declared continuity class along every interface by
        evaluating the one-sided pieces (and their derivatives) on sample
        points of the interface.

        :raises ContinuityError: if neighbouring pieces disagree.
        """
        order = {'piecewise': -1, 'C0': 0, 'C1': 1, 'analytic': 2}
        order = order[self.continuity]
        if order < 0:
            return

        derivatives = []
        for piece in self.pieces:
            exprs = [piece.expr]
            if order >= 1:
                exprs += [sympy.diff(piece.expr, X1),
                          sympy.diff(piece.expr, X2)]
            if order >= 2:
                exprs += [sympy.diff(piece.expr, X1, 2),
                          sympy.diff(piece.expr, X1, X2),
                          sympy.diff(piece.expr, X2, 2)]
            derivatives.append([_lambdify(e) for e in exprs])

        scale = math.hypot(bounds[1] - bounds[0], bounds[3] - bounds[2])
        delta = 1e-7 * scale

        for piece in self.pieces:
            points, normals = piece.region.interface_samples(bounds)
            if len(points) == 0:
                continue

            plus = self.piece_index(*(points + delta * normals).T)
            minus = self.piece_index(*(points - delta * normals).T)

            for p, (i, j) in enumerate(zip(plus, minus)):
                if i < 0 or j < 0 or i == j:
                    continue

                x, y = points[p]
                for k, (fi, fj) in enumerate(zip(derivatives[i],
                                                 derivatives[j])):
                    a, b = complex(fi(x, y)), complex(fj(x, y))
                    if abs(a - b) > tol * max(1.0, abs(a), abs(b)):
                        what = 'value' if k == 0 else f'derivative {k}'
                        raise ContinuityError(
                            f'{what} jumps by {abs(a - b):.3g} at '
                            f'({x:.6g}, {y:.6g}) between pieces {i} and {j} '
                            f'of a {self.continuity} field')

    def __repr__(self):
        return f'<CoefficientField {len(self.pieces)} piece(s) ' \
               f'{self.continuity}>'


def as_field(value) -> Field:
    return CoefficientField.parse(value)


def psi_field(gamma1: Field, gamma2: Field, grid: Grid) -> GridField:
    """ The coefficient difference `gamma2 - gamma1` on the grid. """
    return gamma2.evaluate(grid) - gamma1.evaluate(grid)


def identity_matrix() -> Tuple[Tuple[Field, Field], Tuple[Field, Field]]:
    one, zero = CoefficientField.constant(1), CoefficientField.constant(0)
    return ((one, zero), (zero, one))


def evaluate_matrix(A, grid: Grid) -> np.ndarray:
    """ Evaluate a 2x2 matrix of fields to an array of shape
    `(2, 2, ny, nx)`. """
    values = np.empty((2, 2) + grid.shape, dtype=complex)
    for i in range(2):
        for j in range(2):
            values[i, j] = A[i][j].evaluate(grid).values
    return values


def min_eigenvalue(A: np.ndarray) -> np.ndarray:
    """ Smallest eigenvalue of a field of 2x2 Hermitian matrices. """
    a, d = np.real(A[0, 0]), np.real(A[1, 1])
    b = A[0, 1]
    return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + np.abs(b) ** 2)


@dataclass
class ProblemSpec:
    """ Coefficients and data of the Dirichlet problem
    `div(gamma A grad u) + omega2 rho u = 0` with `u = g` on the boundary.

    `g` is either a field (evaluated at the nearest boundary point of each
    boundary node) or a `GridField` of node values.
    """
    gamma: Field
    rho: Field
    omega2: float
    g: object
    A: tuple = field(default_factory=identity_matrix)
    sigma: float = 0.1 * math.pi

    def boundary_values(self, grid: Grid) -> np.ndarray:
        """ Dirichlet values at the boundary nodes (in mask order). """
        if isinstance(self.g, GridField):
            return np.asarray(self.g.values[grid.boundary], dtype=complex)

        X, Y = grid.X[grid.boundary], grid.Y[grid.boundary]
        if grid.domain.kind == 'disk':
            X, Y = grid.domain.project(X, Y)

        return np.asarray(self.g.evaluate_at(X, Y), dtype=complex)

    def with_coefficients(self, **kwargs) -> "ProblemSpec":
        data = dict(gamma=self.gamma, rho=self.rho, omega2=self.omega2,
                    g=self.g, A=self.A, sigma=self.sigma)
        data.update(kwargs)
        return ProblemSpec(**data)

    def validate(self, grid: Grid, check_bounds: bool = True):
        """ Check the sampled coefficients against the sign, definiteness
        and regularity assumptions.

        :raises AssemblyError: if `A` is not Hermitian positive definite.
        :raises SpecificationError: if the sign conditions on `gamma` and
                                    `rho` fail.
        """
        if self.omega2 < 0:
            raise SpecificationError(f'omega2 must be >= 0, got {self.omega2}')

        if not 0 < self.sigma <= math.pi / 4:
            raise PreconditionError(
                    f'sigma must lie in (0, pi/4], got {self.sigma}')

        mask = grid.valid
        A = evaluate_matrix(self.A, grid)[:, :, mask]
        scale = max(1.0, float(np.max(np.abs(A))))
        asym = np.abs(A[0, 1] - np.conj(A[1, 0]))
        asym = np.maximum(asym, np.abs(np.imag(A[0, 0])))
        asym = np.maximum(asym, np.abs(np.imag(A[1, 1])))

        if np.max(asym) > 1e-12 * scale:
            raise AssemblyError('matrix coefficient A is not Hermitian')

        if np.min(min_eigenvalue(A)) <= 0:
            raise AssemblyError('matrix coefficient A is not positive definite')

        gamma = self.gamma.evaluate(grid).values[mask]
        rho = self.rho.evaluate(grid).values[mask]
        gamma_im = np.imag(gamma)
        rho_im = np.imag(rho)

        if np.min(np.real(gamma)) <= 0:
            raise SpecificationError('Re gamma must be positive')

        if np.any(gamma_im):
            if np.min(gamma_im) <= 0:
                raise SpecificationError(
                        'complex gamma must have positive imaginary part')
            if np.max(rho_im) > 0:
                raise SpecificationError(
                        'rho must have non-positive imaginary part when '
                        'gamma is complex')
        elif self.omega2 > 0:
            if np.any(rho_im) or np.min(np.real(rho)) <= 0:
                raise SpecificationError(
                        'rho must be real and positive when gamma is real')

        if check_bounds:
            bound = 1.0 / self.sigma
            for name, f in [('gamma', self.gamma)] + \
                    [(f'A{i + 1}{j + 1}', self.A[i][j])
                     for i in range(2) for j in range(2)]:
                value = norm(f.evaluate(grid), 'W1s', s=math.inf)
                if value > bound:
                    logging.warning(f'|{name}|_W1inf = {value:.4g} exceeds '
                                    f'1/sigma = {bound:.4g}')

        if self.gamma.interfaces != self.rho.interfaces and \
                self.rho.interfaces:
            logging.warning('gamma and rho have different interface curves')
