from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple
import logging
import math

import networkx as nx
import numpy as np
import pandas as pd
from scipy import ndimage
from skimage.morphology import skeletonize
from sklearn.linear_model import QuantileRegressor

from .errors import DegenerateFieldError, DegenerateStratumError, \
        PreconditionError, RefusalError
from .grid import distance_field, gradient, hessian, level_measure, \
        shrink_set
from .identity import energy_density
from .types import Grid, GridField, ShrinkSet

# Margins of the nested regions W, V and the interior region, as fractions
# of the domain diameter.
W_MARGIN = 0.05
V_MARGIN = 0.1
D_MARGIN = 0.15

DEFAULT_ETAS = (0.1, 0.2, 0.4, 0.6, 0.8, 1.0)

# A critical set covering more of W than this is treated as degenerate.
MAX_CRITICAL_FRACTION = 0.2

# Half width of the tangent window used to label curve samples.
TANGENT_WINDOW = 3

SPUR_LENGTH = 3

_FORWARD_NEIGHBOURS = ((0, 1), (1, -1), (1, 0), (1, 1))


def nested_regions(grid: Grid, w_margin: float = W_MARGIN,
                   v_margin: float = V_MARGIN, d_margin: float = D_MARGIN
                   ) -> dict:
    """ The regions `W`, `V` and `Omega_d` as shrink sets, each at a
    margin given as a fraction of the domain diameter. """
    diameter = grid.domain.diameter
    return dict(
        W=shrink_set(grid, w_margin * diameter),
        V=shrink_set(grid, v_margin * diameter),
        d=shrink_set(grid, d_margin * diameter),
    )


@dataclass
class Component:
    """ A connected component of a critical set. `nodes` and `skeleton`
    are `(k, 2)` arrays of `(iy, ix)` indices. """
    kind: str
    nodes: np.ndarray = field(repr=False)
    skeleton: np.ndarray = field(repr=False)
    centroid: Tuple[float, float] = (0.0, 0.0)

    def __len__(self):
        return len(self.nodes)

    def to_dict(self) -> dict:
        return dict(kind=self.kind, size=len(self.nodes),
                    centroid=list(self.centroid))


@dataclass
class CriticalSet:
    """ Nodes where `|grad u| <= tau_z` (or `|u| <= tau_z` for a nodal set)
    inside the region `W`, split into connected components which are
    classified as `point`, `curve` or `blob`. """
    mask: np.ndarray = field(repr=False)
    tau_z: float
    components: List[Component]
    grid: Grid = field(repr=False)
    source: Optional[GridField] = field(default=None, repr=False)
    kind: str = 'critical'

    @property
    def empty(self) -> bool:
        return not self.components

    def to_dict(self) -> dict:
        return dict(
            kind=self.kind,
            tau_z=self.tau_z,
            nodes=int(np.count_nonzero(self.mask)),
            components=[c.to_dict() for c in self.components],
        )


def _component_graph(mask: np.ndarray) -> nx.Graph:
    ny, nx_ = mask.shape
    g = nx.Graph()
    iy, ix = np.nonzero(mask)
    g.add_nodes_from(zip(iy.tolist(), ix.tolist()))

    for y, x in zip(iy.tolist(), ix.tolist()):
        for dy, dx in _FORWARD_NEIGHBOURS:
            yy, xx = y + dy, x + dx
            if 0 <= yy < ny and 0 <= xx < nx_ and mask[yy, xx]:
                g.add_edge((y, x), (yy, xx))

    return g


def _classify(nodes: np.ndarray, grid: Grid):
    lo = nodes.min(axis=0)
    local = np.zeros(tuple(nodes.max(axis=0) - lo + 3), dtype=bool)
    local[nodes[:, 0] - lo[0] + 1, nodes[:, 1] - lo[1] + 1] = True

    skeleton = np.argwhere(skeletonize(local)) + lo - 1
    if len(skeleton) == 0:
        skeleton = nodes

    extent = math.hypot(np.ptp(skeleton[:, 1]) * grid.hx,
                        np.ptp(skeleton[:, 0]) * grid.hy)
    area = len(nodes) * grid.hx * grid.hy
    equivalent = 2 * math.sqrt(area / math.pi)

    if extent <= max(0.5 * equivalent, 2 * grid.h):
        return 'point', skeleton

    thickness = area / (len(skeleton) * grid.h)
    if thickness <= 0.2 * extent:
        return 'curve', skeleton

    return 'blob', skeleton


def label_components(mask: np.ndarray, grid: Grid) -> List[Component]:
    """ Split a node mask into 8-connected components and classify each by
    the shape of its skeleton. Components are ordered by their first node
    in row-major order. """
    g = _component_graph(np.asarray(mask, dtype=bool))
    result = []

    for nodes in sorted(nx.connected_components(g), key=min):
        nodes = np.array(sorted(nodes))
        kind, skeleton = _classify(nodes, grid)
        centroid = (float(np.mean(grid.x[nodes[:, 1]])),
                    float(np.mean(grid.y[nodes[:, 0]])))
        result.append(Component(kind, nodes, skeleton, centroid))

    return result


def critical_set_from_mask(mask: np.ndarray, grid: Grid,
                           source: Optional[GridField] = None,
                           tau_z: float = 0.0, kind: str = 'critical'
                           ) -> CriticalSet:
    """ Wrap a given node mask as a `CriticalSet`. """
    mask = np.array(mask, dtype=bool)
    mask.setflags(write=False)
    return CriticalSet(mask, float(tau_z), label_components(mask, grid),
                       grid, source, kind)


def _detect(values: np.ndarray, u: GridField, grid: Grid, tau: float,
            margin: float, kind: str) -> CriticalSet:
    region = shrink_set(grid, margin * grid.domain.diameter).mask

    with np.errstate(invalid='ignore'):
        mask = region & np.isfinite(values) & (values <= tau)

    count = int(np.count_nonzero(mask))
    total = int(np.count_nonzero(region))

    if count > MAX_CRITICAL_FRACTION * total:
        raise DegenerateFieldError(
                f'{kind} set covers {count} of {total} nodes; the field '
                f'appears to be locally constant')

    result = critical_set_from_mask(mask, grid, u, tau, kind)
    logging.info(f'{kind} set: {count} node(s) in '
                 f'{len(result.components)} component(s), tau={tau:.3g}')
    return result


def detect_critical_set(u: GridField, grid: Optional[Grid] = None,
                        tau_z: Optional[float] = None,
                        margin: float = W_MARGIN) -> CriticalSet:
    """ Detect the nodes where the discrete gradient of `u` (nearly)
    vanishes, restricted to the region `W`.

    :param tau_z: Detection threshold. Defaults to
                  `10 h max |D^2 u|` over `W`.
    :param margin: Margin of `W` as a fraction of the domain diameter.
    :raises DegenerateFieldError: if the set covers more than 20% of `W`.
    """
    grid = grid or u.grid
    ux, uy = gradient(u)
    speed = np.sqrt(np.abs(ux.values) ** 2 + np.abs(uy.values) ** 2)

    if tau_z is None:
        region = shrink_set(grid, margin * grid.domain.diameter).mask
        curvature = 0.0
        for d in hessian(u):
            curvature = max(curvature, d.max_abs(region & d.valid))
        tau_z = 10 * grid.h * curvature
    elif tau_z <= 0:
        raise PreconditionError(f'tau_z must be positive, got {tau_z}')

    return _detect(speed, u, grid, tau_z, margin, 'critical')


def detect_nodal_set(u: GridField, grid: Optional[Grid] = None,
                     tau: Optional[float] = None, margin: float = W_MARGIN
                     ) -> CriticalSet:
    """ Detect the nodes where `|u|` (nearly) vanishes inside `W`. This is
    the set where the weight `|u|^2` of the potential estimate degenerates.

    :param tau: Threshold, defaults to `2 h max |grad u|` over `W`.
    """
    grid = grid or u.grid

    if tau is None:
        region = shrink_set(grid, margin * grid.domain.diameter).mask
        ux, uy = gradient(u)
        speed = GridField(grid, np.sqrt(np.abs(ux.values) ** 2 +
                                        np.abs(uy.values) ** 2))
        tau = 2 * grid.h * speed.max_abs(region)
    elif tau <= 0:
        raise PreconditionError(f'tau must be positive, got {tau}')

    return _detect(np.abs(u.values), u, grid, tau, margin, 'nodal')


@dataclass(frozen=True)
class PointStratum:
    x: float
    y: float

    kind = 'point'
    M = 0.0

    def polyline(self):
        return np.array([self.x]), np.array([self.y])

    def to_dict(self) -> dict:
        return dict(kind='point', x=self.x, y=self.y)


@dataclass(frozen=True, eq=False)
class GraphPiece:
    """ The graph `x_other = h(x_axis)` of a Lipschitz function sampled at
    increasing `base` values. `axis` is 1 for a graph over `x1` and 2 for a
    graph over `x2`. """
    axis: int
    base: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    M: float

    kind = 'graph'

    @property
    def interval(self) -> Tuple[float, float]:
        return float(self.base[0]), float(self.base[-1])

    def polyline(self):
        if self.axis == 1:
            return self.base, self.values
        return self.values, self.base

    def to_dict(self) -> dict:
        return dict(kind='graph', axis=self.axis, interval=list(self.interval),
                    M=self.M, samples=len(self.base))


@dataclass
class StrataDecomposition:
    """ Point strata and monotone graph pieces describing a critical set.
    `core` marks the nodes the strata were extracted from. """
    strata: tuple
    core: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.strata)

    def __iter__(self):
        return iter(self.strata)

    @property
    def points(self) -> list:
        return [s for s in self.strata if s.kind == 'point']

    @property
    def pieces(self) -> list:
        return [s for s in self.strata if s.kind == 'graph']

    @property
    def M(self) -> float:
        return max((s.M for s in self.strata), default=0.0)

    def to_dict(self) -> dict:
        return dict(M=self.M, strata=[s.to_dict() for s in self.strata])


def _refine_point(component: Component, critical: CriticalSet,
                  derivatives) -> PointStratum:
    grid = critical.grid
    nodes = component.nodes
    iy, ix = nodes[:, 0], nodes[:, 1]

    if critical.source is None:
        return PointStratum(*component.centroid)

    u = critical.source.values
    ux, uy, f11, f12, f22 = derivatives

    if critical.kind == 'nodal':
        residual = np.abs(u[iy, ix])
    else:
        residual = np.abs(ux[iy, ix]) ** 2 + np.abs(uy[iy, ix]) ** 2

    j = int(np.argmin(residual))
    y, x = int(iy[j]), int(ix[j])

    if critical.kind == 'nodal':
        r = np.array([u[y, x]])
        J = np.array([[ux[y, x], uy[y, x]]])
    else:
        r = np.array([ux[y, x], uy[y, x]])
        J = np.array([[f11[y, x], f12[y, x]], [f12[y, x], f22[y, x]]])

    rows = np.vstack([np.real(J), np.imag(J)])
    rhs = -np.concatenate([np.real(r), np.imag(r)])
    px, py = float(grid.x[x]), float(grid.y[y])

    if np.all(np.isfinite(rows)) and np.all(np.isfinite(rhs)):
        delta = np.linalg.lstsq(rows, rhs, rcond=None)[0]
        if math.hypot(*delta) <= 2 * grid.h:
            return PointStratum(px + float(delta[0]), py + float(delta[1]))

    return PointStratum(px, py)


def _skeleton_graph(nodes: np.ndarray) -> nx.Graph:
    present = set(map(tuple, nodes.tolist()))
    g = nx.Graph()
    g.add_nodes_from(sorted(present))

    for y, x in sorted(present):
        for dy, dx in ((0, 1), (1, 0)):
            if (y + dy, x + dx) in present:
                g.add_edge((y, x), (y + dy, x + dx))

        for dy, dx in ((1, 1), (1, -1)):
            q = (y + dy, x + dx)
            if q in present and (y + dy, x) not in present and \
                    (y, x + dx) not in present:
                g.add_edge((y, x), q)

    return g


def _prune_spurs(g: nx.Graph, min_length: int = SPUR_LENGTH):
    changed = True

    while changed:
        changed = False

        for end in sorted(n for n, d in g.degree if d == 1):
            if end not in g or g.degree(end) != 1:
                continue

            path, prev, cur = [end], None, end
            while True:
                nbrs = [n for n in g.neighbors(cur) if n != prev]
                if len(nbrs) != 1:
                    break

                nxt = nbrs[0]
                if g.degree(nxt) >= 3:
                    if len(path) < min_length:
                        g.remove_nodes_from(path)
                        changed = True
                    break

                prev, cur = cur, nxt
                path.append(nxt)


def _trace(g: nx.Graph) -> Tuple[list, bool]:
    nodes = sorted(g.nodes)
    if len(nodes) == 1:
        return nodes, False

    ends = sorted(n for n, d in g.degree if d <= 1)
    if ends:
        return list(nx.dfs_preorder_nodes(g, ends[0])), False

    g = nx.Graph(g)
    start = nodes[0]
    g.remove_edge(start, min(g.neighbors(start)))
    return list(nx.dfs_preorder_nodes(g, start)), True


def _runs(labels: np.ndarray, min_run: int) -> list:
    runs = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            runs.append([start, i, int(labels[start])])
            start = i

    while len(runs) > 1:
        lengths = [stop - start for start, stop, _ in runs]
        j = int(np.argmin(lengths))
        if lengths[j] >= min_run:
            break

        if j > 0:
            runs[j - 1][1] = runs[j][1]
        else:
            runs[1][0] = runs[0][0]
        del runs[j]

        merged = [runs[0]]
        for run in runs[1:]:
            if run[2] == merged[-1][2]:
                merged[-1][1] = run[1]
            else:
                merged.append(run)
        runs = merged

    return runs


def _lipschitz(base: np.ndarray, values: np.ndarray) -> float:
    if len(base) < 2:
        return 0.0

    step = 2 if len(base) >= 3 else 1
    slopes = np.abs(values[step:] - values[:-step]) / \
        (base[step:] - base[:-step])
    return float(np.max(slopes))


def _graph_piece(points: np.ndarray, axis: int) -> GraphPiece:
    b = points[:, axis - 1]
    o = points[:, 2 - axis]
    base, inverse = np.unique(b, return_inverse=True)
    values = np.bincount(inverse, weights=o) / np.bincount(inverse)
    return GraphPiece(axis, base, values, _lipschitz(base, values))


def _split_monotone(points: np.ndarray, axis: int) -> list:
    b = points[:, axis - 1]
    signs = np.sign(np.diff(b))
    pieces = []
    start, current = 0, 0.0

    for i, s in enumerate(signs):
        if s == 0:
            continue
        if current != 0 and s != current:
            pieces.append(points[start:i + 1])
            start = i
        current = s

    pieces.append(points[start:])
    return [_graph_piece(p, axis) for p in pieces]


def monotone_pieces(points: np.ndarray, cyclic: bool = False) -> list:
    """ Split an ordered polyline into graph pieces. Every sample is
    labelled with the axis along which its tangent is dominant (slope at
    most one), short runs are absorbed into their neighbours and each run
    is cut where its base coordinate turns back.

    :param points: `(m, 2)` array of `(x, y)` coordinates.
    :param cyclic: Whether the polyline is closed.
    """
    n = len(points)
    if n == 1:
        return [GraphPiece(1, points[:, 0].copy(), points[:, 1].copy(), 0.0)]

    w = TANGENT_WINDOW
    idx = np.arange(n)

    if cyclic:
        tangent = points[(idx + w) % n] - points[(idx - w) % n]
    else:
        tangent = points[np.minimum(idx + w, n - 1)] - \
            points[np.maximum(idx - w, 0)]

    horizontal = (np.abs(tangent[:, 0]) >= np.abs(tangent[:, 1]))
    horizontal = ndimage.uniform_filter1d(
            horizontal.astype(float), size=2 * w + 1,
            mode='wrap' if cyclic else 'nearest') >= 0.5
    labels = np.where(horizontal, 1, 2)

    if cyclic and np.any(labels != labels[0]):
        shift = int(np.flatnonzero(labels != np.roll(labels, 1))[0])
        points = np.roll(points, -shift, axis=0)
        labels = np.roll(labels, -shift)

    runs = _runs(labels, 2 * w - 1)

    if cyclic and len(runs) > 1 and runs[0][2] == runs[-1][2]:
        last = runs.pop()
        points = np.concatenate([points[last[0]:], points[:last[0]]])
        offset = n - last[0]
        runs = [[0, runs[0][1] + offset, runs[0][2]]] + \
            [[a + offset, b + offset, c] for a, b, c in runs[1:]]

    result = []
    for k, (start, stop, axis) in enumerate(runs):
        if k + 1 < len(runs):
            stop += 1
        segment = points[start:stop]
        if cyclic and k + 1 == len(runs) and len(runs) > 1:
            segment = np.concatenate([segment, points[:1]])
        result.extend(_split_monotone(segment, axis))

    return result


def _curve_pieces(component: Component, grid: Grid):
    g = _skeleton_graph(component.skeleton)
    _prune_spurs(g)
    g.remove_nodes_from([n for n, d in list(g.degree) if d >= 3])

    pieces, used = [], []
    for nodes in sorted(nx.connected_components(g), key=min):
        order, cyclic = _trace(g.subgraph(nodes))
        index = np.array(order)
        points = np.column_stack([grid.x[index[:, 1]], grid.y[index[:, 0]]])
        pieces.extend(monotone_pieces(points, cyclic))
        used.append(index)

    return pieces, used


def extract_strata(critical: CriticalSet, grid: Optional[Grid] = None
                   ) -> StrataDecomposition:
    """ Decompose a critical set into point strata and graph pieces.

    Point-like components become single points, refined by one Newton step
    on the gradient. Curve-like components are skeletonized, traced into
    polylines and split into pieces which are graphs over `x1` or `x2`.

    :raises PreconditionError: if the set is empty.
    :raises DegenerateStratumError: for a two-dimensional component.
    """
    grid = grid or critical.grid

    if critical.empty:
        raise PreconditionError('cannot stratify an empty critical set')

    derivatives = None
    if critical.source is not None:
        ux, uy = gradient(critical.source)
        derivatives = (ux.values, uy.values) + \
            tuple(d.values for d in hessian(critical.source))

    strata = []
    core = np.zeros(grid.shape, dtype=bool)

    for component in critical.components:
        if component.kind == 'blob':
            x, y = component.centroid
            raise DegenerateStratumError(
                    f'component of {len(component)} nodes near '
                    f'({x:.4f}, {y:.4f}) is two-dimensional')

        if component.kind == 'point':
            point = _refine_point(component, critical, derivatives)
            strata.append(point)
            core[grid.nearest_node(point.x, point.y)] = True
            continue

        pieces, used = _curve_pieces(component, grid)
        strata.extend(pieces)
        for index in used:
            core[index[:, 0], index[:, 1]] = True

    logging.info(f'extracted {len(strata)} strata')
    core.setflags(write=False)
    return StrataDecomposition(tuple(strata), core)


def _segment_distance(px, py, xs, ys, chunk=16):
    best = np.full(px.shape, np.inf)
    ax, ay = xs[:-1], ys[:-1]
    bx, by = xs[1:], ys[1:]

    for lo in range(0, len(ax), chunk):
        sl = slice(lo, lo + chunk)
        dx, dy = bx[sl] - ax[sl], by[sl] - ay[sl]
        length2 = np.maximum(dx ** 2 + dy ** 2, 1e-300)
        qx = px[:, None] - ax[None, sl]
        qy = py[:, None] - ay[None, sl]
        t = np.clip((qx * dx + qy * dy) / length2, 0.0, 1.0)
        dist = np.hypot(qx - t * dx, qy - t * dy)
        best = np.minimum(best, dist.min(axis=1))

    return best


def strata_distance(strata: StrataDecomposition, grid: Grid) -> GridField:
    """ Euclidean distance from every node to the union of the strata (the
    points and the polylines of the graph pieces). """
    px, py = grid.X.ravel(), grid.Y.ravel()
    dist = np.full(px.shape, np.inf)

    for s in strata:
        xs, ys = s.polyline()
        if len(xs) == 1:
            dist = np.minimum(dist, np.hypot(px - xs[0], py - ys[0]))
        else:
            dist = np.minimum(dist, _segment_distance(px, py, xs, ys))

    return GridField(grid, dist.reshape(grid.shape))


def default_padding(grid: Grid) -> float:
    """ Half of the largest extent of the domain. """
    xmin, xmax, ymin, ymax = grid.domain.bounds
    return 0.5 * max(xmax - xmin, ymax - ymin)


def build_slab_cover(strata: StrataDecomposition, eta: float, grid: Grid,
                     R: Optional[float] = None) -> np.ndarray:
    """ The neighbourhood `U(eta)` as a union of slabs: for a graph
    `x_other = h(x_axis)` the nodes with `|x_other - h(x_axis)| < eta` whose
    base coordinate lies in the base interval padded by `R`; for a point the
    nodes with `|x2 - p2| < eta` and `|x1 - p1| < R`.

    :param R: Padding, at least half the domain extent (the default).
    :raises PreconditionError: if `eta <= 0` or `R` is too small.
    """
    if not eta > 0:
        raise PreconditionError(f'eta must be positive, got {eta}')

    half = default_padding(grid)
    R = half if R is None else R
    if R < half * (1 - 1e-12):
        raise PreconditionError(
                f'padding R={R} is less than half the domain extent {half}')

    X, Y = grid.X, grid.Y
    mask = np.zeros(grid.shape, dtype=bool)

    for s in strata:
        if s.kind == 'point':
            mask |= (np.abs(Y - s.y) < eta) & (np.abs(X - s.x) < R)
            continue

        b, o = (X, Y) if s.axis == 1 else (Y, X)
        lo, hi = s.interval
        h = np.interp(b, s.base, s.values)
        mask |= (np.abs(o - h) < eta) & (b > lo - R) & (b < hi + R)

    return mask & grid.valid


def build_ball_cover(strata: StrataDecomposition, eta: float, grid: Grid,
                     distance: Optional[GridField] = None) -> np.ndarray:
    """ The nodes within distance `eta` of the strata. Its volume scales
    with the square of `eta` around a point. """
    if not eta > 0:
        raise PreconditionError(f'eta must be positive, got {eta}')

    if distance is None:
        distance = strata_distance(strata, grid)

    return (distance.values < eta) & grid.valid


@dataclass
class LojasiewiczFit:
    """ Lower bound `f >= C3 d^r` of the energy density in terms of the
    distance to the critical set. """
    C3: float
    r: float
    slope: float
    intercept: float
    coverage: float
    non_binding: bool
    n_nodes: int
    n_fit: int
    samples: Optional[pd.DataFrame] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return dict(C3=self.C3, r=self.r, slope=self.slope,
                    intercept=self.intercept, coverage=self.coverage,
                    non_binding=self.non_binding, n_nodes=self.n_nodes,
                    n_fit=self.n_fit)


@dataclass
class TubeFit:
    etas: np.ndarray
    volumes: np.ndarray
    min_ratios: np.ndarray
    C1: float
    exponent: float
    C2: float
    C2_analytic: float
    residual: float
    cover: str = 'slab'
    lojasiewicz: Optional[LojasiewiczFit] = None

    @property
    def C3(self) -> Optional[float]:
        return self.lojasiewicz.C3 if self.lojasiewicz else None

    @property
    def r(self) -> Optional[float]:
        return self.lojasiewicz.r if self.lojasiewicz else None

    @property
    def table(self) -> pd.DataFrame:
        return pd.DataFrame(dict(
            eta=self.etas,
            vol=self.volumes,
            vol_over_eta=self.volumes / self.etas,
            min_dist_ratio=self.min_ratios,
        ))

    def with_lojasiewicz(self, fit: LojasiewiczFit) -> "TubeFit":
        return replace(self, lojasiewicz=fit)

    def to_dict(self) -> dict:
        return dict(
            cover=self.cover,
            C1=self.C1,
            exponent=self.exponent,
            C2=self.C2,
            C2_analytic=self.C2_analytic,
            residual=self.residual,
            C3=self.C3,
            r=self.r,
            lojasiewicz=self.lojasiewicz.to_dict() if self.lojasiewicz
            else None,
            table=self.table.to_dict(orient='records'),
        )


def fit_tube_constants(strata: StrataDecomposition, grid: Grid,
                       etas: Sequence[float] = DEFAULT_ETAS,
                       R: Optional[float] = None, cover: str = 'slab',
                       sample: int = 1000) -> TubeFit:
    """ Fit the covering constants of the neighbourhoods `U(eta)`:
    `vol(U(eta)) <= C1 eta` and `dist(p, Z) >= C2 eta` outside `U(eta)`.

    The volume exponent is the least-squares slope of `log vol` against
    `log eta`. `C2` is the smallest ratio over the `sample` exterior nodes
    nearest to the strata.

    :param cover: `slab` (the default) or `ball` for the distance-ball
                  diagnostic.
    :raises PreconditionError: with fewer than four distinct `eta` values
                               in `(0, 1]`.
    :raises RefusalError: if there are no strata.
    """
    etas = np.unique(np.asarray(etas, dtype=float))

    if len(etas) < 4 or etas[0] <= 0 or etas[-1] > 1:
        raise PreconditionError(
                'need at least four distinct eta values in (0, 1]')

    if len(strata) == 0:
        raise RefusalError('no strata to cover')

    distance = strata_distance(strata, grid)
    dist = distance.values
    volumes, ratios = [], []

    for eta in etas:
        if cover == 'slab':
            U = build_slab_cover(strata, eta, grid, R)
        elif cover == 'ball':
            U = build_ball_cover(strata, eta, grid, distance)
        else:
            raise PreconditionError(f'unknown cover {cover!r}')

        volumes.append(float(np.sum(grid.weights[U])))

        outside = dist[grid.valid & ~U]
        if outside.size:
            k = min(sample, outside.size)
            nearest = np.partition(outside, k - 1)[:k]
            ratios.append(float(np.min(nearest)) / eta)
        else:
            ratios.append(math.inf)

    volumes = np.array(volumes)
    ratios = np.array(ratios)

    if np.any(volumes <= 0):
        raise RefusalError('a cover contains no grid nodes; refine the grid')

    log_eta, log_vol = np.log(etas), np.log(volumes)
    exponent, intercept = np.polyfit(log_eta, log_vol, 1)
    residual = float(np.sqrt(np.mean(
            (log_vol - (exponent * log_eta + intercept)) ** 2)))

    C2_analytic = 1.0 / (2.0 + strata.M)
    C2 = float(np.min(ratios))
    if math.isinf(C2):
        C2 = C2_analytic

    fit = TubeFit(etas, volumes, ratios, float(np.max(volumes / etas)),
                  float(exponent), C2, C2_analytic, residual, cover)
    logging.info(f'{cover} cover: C1={fit.C1:.4g} exponent={fit.exponent:.3f} '
                 f'C2={fit.C2:.4g}')
    return fit


def fit_power_lower_bound(d: np.ndarray, f: np.ndarray,
                          quantile: float = 0.01, bins: int = 20,
                          max_points: int = 4000, seed: int = 0
                          ) -> Tuple[float, float, pd.DataFrame]:
    """ Fit the lower envelope `log f >= log C + r log d` by quantile
    regression. Samples are grouped in `bins` bins of `log d`, thinned to
    at most `max_points` and weighted so every bin counts equally.

    :returns: `(slope, intercept, frame)` where `frame` holds the samples
              used in the fit.
    """
    d = np.asarray(d, dtype=float)
    f = np.asarray(f, dtype=float)
    frame = pd.DataFrame(dict(log_d=np.log(d), log_f=np.log(f)))

    if frame['log_d'].nunique() > 1:
        frame['bin'] = pd.cut(frame['log_d'], bins=bins, labels=False)
    else:
        frame['bin'] = 0

    per_bin = max(1, max_points // bins)
    frame = frame.sample(frac=1.0, random_state=seed)
    frame = frame.groupby('bin').head(per_bin).sort_index()
    frame['weight'] = 1.0 / frame.groupby('bin')['log_d'].transform('size')

    model = QuantileRegressor(quantile=quantile, alpha=0.0, solver='highs')
    model.fit(frame[['log_d']].to_numpy(), frame['log_f'].to_numpy(),
              sample_weight=frame['weight'].to_numpy())

    return float(model.coef_[0]), float(model.intercept_), frame


def fit_lojasiewicz(u: GridField, A, critical: CriticalSet,
                    region, strata: Optional[StrataDecomposition] = None,
                    fit_radius: Optional[float] = None,
                    quantile: float = 0.01, bins: int = 20,
                    max_points: int = 4000,
                    density: Optional[GridField] = None) -> LojasiewiczFit:
    """ Fit `f >= C3 d^r` over `region`, where `f = A grad u . conj(grad u)`
    (or the given `density`) and `d` is the distance to the strata (to the
    critical nodes when no strata are given).

    The exponent is the slope of the 1% lower quantile of `log f` against
    `log d`, fitted on the nodes within `fit_radius` of the set; `C3` is the
    smallest ratio `f / d^r` over the region outside the critical set. A
    slope below 0.1 is reported as a non-binding fit with `r = 1`.

    :raises RefusalError: if the critical set is empty.
    """
    if critical.empty:
        raise RefusalError('critical set is empty; the energy density is '
                           'bounded below directly')

    grid = critical.grid
    f = (density if density is not None else energy_density(u, A)).values
    f = np.real(f)

    if strata is not None:
        d = strata_distance(strata, grid).values
    else:
        d = distance_field(critical.mask, grid).values

    if isinstance(region, ShrinkSet):
        region = region.mask
    region = np.asarray(region, dtype=bool)

    with np.errstate(invalid='ignore'):
        nodes = region & ~critical.mask & np.isfinite(f) & (f > 0) & (d > 0)

    if not np.any(nodes):
        raise RefusalError('no nodes with positive density left in the '
                           'region')

    fit_nodes = nodes
    if fit_radius is not None:
        near = nodes & (d <= fit_radius)
        if np.count_nonzero(near) >= 10:
            fit_nodes = near

    slope, intercept, samples = fit_power_lower_bound(
            d[fit_nodes], f[fit_nodes], quantile, bins, max_points)

    non_binding = slope <= 0.1
    r = 1.0 if non_binding else slope
    if non_binding:
        logging.warning(f'lojasiewicz fit is non-binding (slope '
                        f'{slope:.3g}); using r=1')

    C3 = float(np.min(f[nodes] / d[nodes] ** r))

    with np.errstate(invalid='ignore'):
        checked = region & np.isfinite(f) & (d > 0)
        holds = f[checked] >= C3 * d[checked] ** r * (1 - 1e-12)
    coverage = float(np.mean(holds)) if holds.size else 1.0

    logging.info(f'lojasiewicz fit: r={r:.3f} C3={C3:.4g} '
                 f'coverage={coverage:.4f}')
    return LojasiewiczFit(C3, float(r), slope, intercept, coverage,
                          bool(non_binding), int(np.count_nonzero(nodes)),
                          int(np.count_nonzero(fit_nodes)), samples)


@dataclass
class LevelProfile:
    table: pd.DataFrame
    M_f: float
    sup_by_eps: pd.DataFrame
    exceptional: list

    def to_dict(self) -> dict:
        return dict(M_f=self.M_f, exceptional=self.exceptional,
                    sup_by_eps=self.sup_by_eps.to_dict(orient='records'))


def level_measure_profile(f: GridField, ts: Sequence[float],
                          Z: Optional[np.ndarray] = None,
                          eps: Sequence[float] = (),
                          grid: Optional[Grid] = None) -> LevelProfile:
    """ Lengths of the level sets `{f = t}`, globally and restricted to the
    neighbourhoods `Z_eps = {dist(x, Z) <= eps}`.

    A level `t` on which `f` is constant over an open set is exceptional:
    its length is reported as `nan` and it is left out of `M_f`.

    :returns: A profile with the table (`t`, `eps`, `measure`; `eps=inf` for
              the global lengths), `M_f = max_t H1({f = t})` and the
              supremum over `t` for every `eps`.
    """
    grid = grid or f.grid
    if not f.is_real:
        raise PreconditionError('level profile requires a real field')

    values = np.real(f.values)
    valid = grid.valid & np.isfinite(values)
    real = GridField(grid, np.where(valid, values, np.nan))
    tol = 1e-12 * max(1.0, float(np.max(np.abs(values[valid]), initial=0.0)))

    dist = None
    if Z is not None and len(eps):
        dist = distance_field(Z, grid).values

    rows, exceptional = [], []

    for t in ts:
        flat = valid & (np.abs(values - t) <= tol)
        if np.any(ndimage.binary_erosion(flat, structure=np.ones((3, 3)))):
            exceptional.append(float(t))
            rows.append(dict(t=float(t), eps=math.inf, measure=math.nan))
            rows.extend(dict(t=float(t), eps=float(e), measure=math.nan)
                        for e in (eps if dist is not None else ()))
            continue

        rows.append(dict(t=float(t), eps=math.inf,
                         measure=level_measure(real, t, valid)))

        if dist is not None:
            for e in eps:
                region = valid & (dist <= e)
                rows.append(dict(t=float(t), eps=float(e),
                                 measure=level_measure(real, t, region)))

    table = pd.DataFrame(rows, columns=['t', 'eps', 'measure'])
    global_rows = table[np.isinf(table['eps'])]
    M_f = float(global_rows['measure'].max()) if \
        global_rows['measure'].notna().any() else 0.0

    local = table[np.isfinite(table['eps'])]
    sup = local.groupby('eps', as_index=False)['measure'].max()
    sup = sup.rename(columns=dict(measure='sup')).sort_values(
            'eps', ascending=False, ignore_index=True)

    return LevelProfile(table, M_f, sup, exceptional)
