from dataclasses import dataclass, field
from typing import Optional, Tuple
import math

import numpy as np
import pandas as pd
from scipy import ndimage

from .errors import InvalidResolutionError, PreconditionError


@dataclass(frozen=True)
class Domain:
    """ A bounded planar domain. Either a rectangle `(0, x_extent) x
    (0, y_extent)` or an open disk with given center and radius.

    Rectangles have corners and thus violate the smooth-boundary assumption;
    use a disk for experiments which are sensitive to the boundary.
    """
    kind: str
    x_extent: float = 1.0
    y_extent: float = 1.0
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if self.kind == 'rectangle':
            if not (self.x_extent > 0 and self.y_extent > 0):
                raise PreconditionError(
                        f'rectangle extents must be positive, got '
                        f'{self.x_extent} x {self.y_extent}')
        elif self.kind == 'disk':
            if not self.radius > 0:
                raise PreconditionError(
                        f'disk radius must be positive, got {self.radius}')
            object.__setattr__(self, 'center', tuple(map(float, self.center)))
        else:
            raise PreconditionError(f'unknown domain kind: {self.kind!r}')

    @staticmethod
    def rectangle(x_extent: float, y_extent: float) -> "Domain":
        return Domain('rectangle', x_extent=float(x_extent),
                      y_extent=float(y_extent))

    @staticmethod
    def disk(center, radius: float) -> "Domain":
        return Domain('disk', center=tuple(center), radius=float(radius))

    @staticmethod
    def from_dict(data: dict) -> "Domain":
        kind = data.get('kind', 'rectangle')
        if kind == 'disk':
            return Domain.disk(data.get('center', (0.0, 0.0)),
                               data.get('radius', 1.0))
        return Domain.rectangle(data.get('x_extent', 1.0),
                                data.get('y_extent', 1.0))

    def to_dict(self) -> dict:
        if self.kind == 'disk':
            return dict(kind='disk', center=list(self.center),
                        radius=self.radius)
        return dict(kind='rectangle', x_extent=self.x_extent,
                    y_extent=self.y_extent)

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        """ `(xmin, xmax, ymin, ymax)` of the bounding box. """
        if self.kind == 'disk':
            (cx, cy), r = self.center, self.radius
            return cx - r, cx + r, cy - r, cy + r
        return 0.0, self.x_extent, 0.0, self.y_extent

    @property
    def diameter(self) -> float:
        if self.kind == 'disk':
            return 2 * self.radius
        return math.hypot(self.x_extent, self.y_extent)

    @property
    def perimeter(self) -> float:
        """ Length of the boundary curve. """
        if self.kind == 'disk':
            return 2 * math.pi * self.radius
        return 2 * (self.x_extent + self.y_extent)

    @property
    def area(self) -> float:
        if self.kind == 'disk':
            return math.pi * self.radius ** 2
        return self.x_extent * self.y_extent

    def boundary_distance(self, x, y):
        """ Signed distance to the boundary, positive inside the domain. """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)

        if self.kind == 'disk':
            cx, cy = self.center
            return self.radius - np.hypot(x - cx, y - cy)

        return np.minimum.reduce([x, self.x_extent - x,
                                  y, self.y_extent - y])

    def contains(self, x, y):
        return self.boundary_distance(x, y) > 0

    def project(self, x, y):
        """ Nearest point on the boundary for points on or near it. """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)

        if self.kind == 'disk':
            cx, cy = self.center
            dx, dy = x - cx, y - cy
            r = np.hypot(dx, dy)
            safe = np.where(r > 0, r, 1.0)
            px = np.where(r > 0, cx + self.radius * dx / safe,
                          cx + self.radius)
            py = np.where(r > 0, cy + self.radius * dy / safe, cy)
            return px, py

        px = np.clip(x, 0.0, self.x_extent)
        py = np.clip(y, 0.0, self.y_extent)
        gaps = np.stack([px, self.x_extent - px, py, self.y_extent - py])
        side = np.argmin(gaps, axis=0)
        px = np.where(side == 0, 0.0, np.where(side == 1, self.x_extent, px))
        py = np.where(side == 2, 0.0, np.where(side == 3, self.y_extent, py))
        return px, py


class Grid:
    """ Uniform Cartesian grid over the bounding box of a `Domain`.

    Node arrays have shape `(n_cells + 1, n_cells + 1)` and are indexed as
    `[iy, ix]`, so row-major order walks along `x` first. Every node is
    exactly one of interior, boundary or exterior: interior nodes lie
    strictly inside the domain, boundary nodes are the non-interior nodes
    which touch an interior node (8-neighbourhood), and all others are
    exterior.
    """

    def __init__(self, domain: Domain, n_cells: int):
        if int(n_cells) != n_cells or n_cells < 2:
            raise InvalidResolutionError(
                    f'n_cells must be an integer >= 2, got {n_cells}')

        n_cells = int(n_cells)
        xmin, xmax, ymin, ymax = domain.bounds

        self.domain = domain
        self.n_cells = n_cells
        self.hx = (xmax - xmin) / n_cells
        self.hy = (ymax - ymin) / n_cells
        self.x = np.linspace(xmin, xmax, n_cells + 1)
        self.y = np.linspace(ymin, ymax, n_cells + 1)
        self.X, self.Y = np.meshgrid(self.x, self.y)

        if domain.kind == 'rectangle':
            interior = np.zeros(self.shape, dtype=bool)
            interior[1:-1, 1:-1] = True
        else:
            interior = domain.contains(self.X, self.Y)

        structure = np.ones((3, 3), dtype=bool)
        boundary = ndimage.binary_dilation(interior, structure=structure)
        boundary &= ~interior

        self.interior = interior
        self.boundary = boundary
        self.exterior = ~(interior | boundary)

        for mask in (self.interior, self.boundary, self.exterior):
            mask.setflags(write=False)

        self._weights = None

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_cells + 1, self.n_cells + 1)

    @property
    def size(self) -> int:
        return (self.n_cells + 1) ** 2

    @property
    def h(self) -> float:
        """ Grid spacing. For non-square rectangles the larger of the two
        axis spacings. """
        return max(self.hx, self.hy)

    @property
    def valid(self) -> np.ndarray:
        """ Mask of the closed domain: interior and boundary nodes. """
        return ~self.exterior

    @property
    def weights(self) -> np.ndarray:
        """ Quadrature weights per node. Trapezoidal on rectangles, cell
        area on interior nodes (and zero elsewhere) on disks. """
        if self._weights is None:
            if self.domain.kind == 'rectangle':
                wx = np.full(self.n_cells + 1, self.hx)
                wy = np.full(self.n_cells + 1, self.hy)
                wx[[0, -1]] *= 0.5
                wy[[0, -1]] *= 0.5
                weights = np.outer(wy, wx)
            else:
                weights = np.where(self.interior, self.hx * self.hy, 0.0)

            weights.setflags(write=False)
            self._weights = weights

        return self._weights

    def field(self, values) -> "GridField":
        return GridField(self, values)

    def zeros(self, dtype=float) -> "GridField":
        values = np.zeros(self.shape, dtype=dtype)
        values[self.exterior] = np.nan
        return GridField(self, values)

    def evaluate(self, fun) -> "GridField":
        """ Evaluate `fun(x, y)` on all non-exterior nodes. """
        values = np.asarray(fun(self.X, self.Y))
        values = np.broadcast_to(values, self.shape).copy()
        if not np.iscomplexobj(values):
            values = values.astype(float)
        values[self.exterior] = np.nan
        return GridField(self, values)

    def nearest_node(self, x: float, y: float) -> Tuple[int, int]:
        """ Index `(iy, ix)` of the node closest to `(x, y)`. """
        ix = int(np.clip(np.rint((x - self.x[0]) / self.hx), 0, self.n_cells))
        iy = int(np.clip(np.rint((y - self.y[0]) / self.hy), 0, self.n_cells))
        return iy, ix

    def __eq__(self, other):
        return isinstance(other, Grid) and self.domain == other.domain and \
                self.n_cells == other.n_cells

    def __hash__(self):
        return hash((self.domain, self.n_cells))

    def __repr__(self):
        return f'<Grid {self.domain.kind} n_cells={self.n_cells}>'


class GridField:
    """ Values (real or complex) attached to every node of a `Grid`. Nodes
    holding `nan` are invalid, which is always the case for exterior nodes.

    A `GridField` is immutable; arithmetic returns a new field.
    """

    def __init__(self, grid: Grid, values):
        values = np.array(values, copy=True)
        if values.ndim == 0:
            values = np.full(grid.shape, values[()])

        assert values.shape == grid.shape, \
            f'expecting shape {grid.shape}, got {values.shape}'

        if not np.iscomplexobj(values):
            values = values.astype(float)

        values.setflags(write=False)
        self.grid = grid
        self.values = values

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def is_real(self) -> bool:
        if not np.iscomplexobj(self.values):
            return True
        imag = self.values.imag[self.valid]
        return not np.any(imag)

    @property
    def real(self) -> "GridField":
        return GridField(self.grid, np.real(self.values))

    @property
    def imag(self) -> "GridField":
        return GridField(self.grid, np.imag(self.values))

    def abs(self) -> "GridField":
        return GridField(self.grid, np.abs(self.values))

    def conj(self) -> "GridField":
        return GridField(self.grid, np.conj(self.values))

    def max_abs(self, region: Optional[np.ndarray] = None) -> float:
        """ Maximum of `|f|` over the valid nodes of `region`. """
        mask = self.valid if region is None else region & self.valid
        if not np.any(mask):
            return 0.0
        return float(np.max(np.abs(self.values[mask])))

    def _operand(self, other):
        if isinstance(other, GridField):
            assert other.grid == self.grid, 'fields live on different grids'
            return other.values
        return other

    def __add__(self, other):
        return GridField(self.grid, self.values + self._operand(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return GridField(self.grid, self.values - self._operand(other))

    def __rsub__(self, other):
        return GridField(self.grid, self._operand(other) - self.values)

    def __mul__(self, other):
        return GridField(self.grid, self.values * self._operand(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        return GridField(self.grid, self.values / self._operand(other))

    def __neg__(self):
        return GridField(self.grid, -self.values)

    def __repr__(self):
        kind = 'real' if self.is_real else 'complex'
        return f'<GridField {kind} on {self.grid!r}>'

    def to_frame(self) -> pd.DataFrame:
        """ Nodes in row-major order with columns `x, y, re, im`. """
        values = self.values.ravel()
        return pd.DataFrame(dict(
            x=self.grid.X.ravel(),
            y=self.grid.Y.ravel(),
            re=np.real(values),
            im=np.imag(values) if np.iscomplexobj(values)
            else np.zeros(values.shape),
        ))

    def to_csv(self, path):
        """ Write the field as CSV with header `x,y,re,im`. Invalid nodes
        are written as `nan`. """
        self.to_frame().to_csv(path, index=False, float_format='%.17g',
                               na_rep='nan')


@dataclass(frozen=True)
class ShrinkSet:
    """ Nodes at distance more than `depth` from the complement of the
    domain. """
    depth: float
    mask: np.ndarray = field(repr=False, compare=False)

    def __contains__(self, index) -> bool:
        return bool(self.mask[index])
