from coefstab.errors import ExponentError, InvalidResolutionError, \
        MaskedValueError, PreconditionError
from coefstab.grid import build_grid, distance_field, gradient, hessian, \
        integrate, level_measure, norm, shrink_set
from coefstab.types import Domain, GridField
import math
import numpy as np
import pytest


def test_rectangle_grid():
    grid = build_grid(Domain.rectangle(2, 1), 4)

    assert grid.shape == (5, 5)
    assert grid.hx == 0.5
    assert grid.hy == 0.25
    assert grid.h == 0.5
    assert np.count_nonzero(grid.interior) == 9
    assert np.count_nonzero(grid.boundary) == 16
    assert not np.any(grid.exterior)

    # every node is exactly one of interior, boundary, exterior
    total = grid.interior.astype(int) + grid.boundary + grid.exterior
    assert np.all(total == 1)


def test_disk_grid():
    grid = build_grid(Domain.disk((0, 0), 1), 32)

    total = grid.interior.astype(int) + grid.boundary + grid.exterior
    assert np.all(total == 1)
    assert grid.exterior[0, 0]
    assert grid.interior[16, 16]

    f = grid.evaluate(lambda x, y: np.ones_like(x))
    assert np.isnan(f.values[0, 0])
    assert abs(integrate(f) - math.pi) / math.pi < 0.05


def test_invalid_resolution():
    with pytest.raises(InvalidResolutionError):
        build_grid(Domain.rectangle(1, 1), 1)

    with pytest.raises(PreconditionError):
        Domain.rectangle(0, 1)

    with pytest.raises(PreconditionError):
        Domain.disk((0, 0), -1)


def test_integrate():
    grid = build_grid(Domain.rectangle(2, 1), 16)

    one = grid.evaluate(lambda x, y: np.ones_like(x))
    assert abs(integrate(one) - 2) < 1e-12

    # trapezoid rule is exact for bilinear functions
    f = grid.evaluate(lambda x, y: x * y)
    assert abs(integrate(f) - 1.0) < 1e-12

    z = grid.evaluate(lambda x, y: np.exp(1j * x))
    expected = (np.exp(2j) - 1) / 1j
    assert abs(integrate(z) - expected) < 1e-2


def test_integrate_invalid_region():
    grid = build_grid(Domain.rectangle(1, 1), 8)
    values = np.ones(grid.shape)
    values[4, 4] = np.nan
    f = GridField(grid, values)

    with pytest.raises(MaskedValueError):
        integrate(f)

    mask = grid.valid.copy()
    mask[4, 4] = False
    assert integrate(f, mask) < 1


def test_norms():
    grid = build_grid(Domain.rectangle(1, 1), 32)
    f = grid.evaluate(lambda x, y: -np.ones_like(x))

    assert norm(f, 'Linf') == 1
    assert abs(norm(f, 'L1') - 1) < 1e-12
    assert abs(norm(f, 'W11') - 1) < 1e-12
    assert abs(norm(f, 'W21') - 1) < 1e-12
    assert abs(norm(f, 'W1s', s=4) - 1) < 1e-12
    assert norm(f, 'W1s', s=math.inf) == 1

    g = grid.evaluate(lambda x, y: x)
    # derivative terms only count the (n - 1)^2 interior nodes
    h = grid.h
    assert abs(norm(g, 'W11') - (0.5 + (1 - h) ** 2)) < 1e-10

    with pytest.raises(ExponentError):
        norm(f, 'W1s', s=2)

    with pytest.raises(PreconditionError):
        norm(f, 'H1')


def test_gradient_and_hessian():
    grid = build_grid(Domain.rectangle(1, 1), 16)
    f = grid.evaluate(lambda x, y: x ** 2 + x * y)

    fx, fy = gradient(f)
    assert np.allclose(fx.values, 2 * grid.X + grid.Y)
    assert np.allclose(fy.values, grid.X)

    f11, f12, f22 = hessian(f)
    assert np.allclose(f11.values[1:-1, 1:-1], 2)
    assert np.allclose(f12.values[1:-1, 1:-1], 1)
    assert np.allclose(f22.values[1:-1, 1:-1], 0)
    assert np.all(np.isnan(f11.values[0, :]))


def test_distance_field():
    grid = build_grid(Domain.rectangle(2, 2), 4)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[2, 2] = True

    dist = distance_field(mask, grid).values
    assert dist[2, 2] == 0
    assert abs(dist[0, 0] - math.hypot(1, 1)) < 1e-12

    empty = distance_field(np.zeros(grid.shape, dtype=bool), grid)
    assert np.all(np.isinf(empty.values))


def test_level_measure():
    grid = build_grid(Domain.rectangle(1, 1), 64)

    f = grid.evaluate(lambda x, y: x)
    assert abs(level_measure(f, 0.51) - 1) < 1e-10

    r = grid.evaluate(lambda x, y: np.hypot(x - 0.5, y - 0.5))
    assert abs(level_measure(r, 0.3) - 2 * math.pi * 0.3) < 1e-2


def test_shrink_set():
    grid = build_grid(Domain.rectangle(1, 1), 4)
    inner = shrink_set(grid, 0.25)

    assert inner.depth == 0.25
    assert np.count_nonzero(inner.mask) == 1
    assert (2, 2) in inner

    disk = build_grid(Domain.disk((0, 0), 1), 32)
    inner = shrink_set(disk, 0.5)
    r = np.hypot(disk.X, disk.Y)
    assert np.all(r[inner.mask] < 0.5)

    with pytest.raises(PreconditionError):
        shrink_set(grid, 0)


def test_field_dump(tmp_path):
    grid = build_grid(Domain.rectangle(1, 1), 2)
    f = grid.evaluate(lambda x, y: x + 1j * y)
    frame = f.to_frame()

    assert list(frame.columns) == ['x', 'y', 're', 'im']
    assert len(frame) == 9
    assert frame['x'].tolist()[:3] == [0.0, 0.5, 1.0]
    assert frame['im'].tolist()[3] == 0.5

    path = tmp_path / 'f.csv'
    f.to_csv(path)
    assert path.read_text().splitlines()[0] == 'x,y,re,im'
