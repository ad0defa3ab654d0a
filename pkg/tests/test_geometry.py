from coefstab.errors import DegenerateFieldError, PreconditionError, \
        RefusalError
from coefstab.geometry import GraphPiece, PointStratum, \
        StrataDecomposition, build_ball_cover, build_slab_cover, \
        critical_set_from_mask, detect_critical_set, detect_nodal_set, \
        extract_strata, fit_lojasiewicz, fit_tube_constants, \
        level_measure_profile, monotone_pieces, nested_regions, \
        strata_distance
from coefstab.grid import build_grid
from coefstab.coefficients import identity_matrix
from coefstab.types import Domain, GridField
import math
import numpy as np
import pytest


def cosine_field(n=64):
    grid = build_grid(Domain.rectangle(2, 2), n)
    return grid, grid.evaluate(lambda x, y: np.cos(x) * np.cos(y))


def point_strata(grid, x=1.0, y=1.0):
    return StrataDecomposition((PointStratum(x, y),),
                               np.zeros(grid.shape, dtype=bool))


def test_nested_regions():
    grid = build_grid(Domain.rectangle(1, 1), 32)
    regions = nested_regions(grid)

    W, V, d = regions['W'].mask, regions['V'].mask, regions['d'].mask
    assert np.all(W[V])
    assert np.all(V[d])
    assert np.count_nonzero(d) < np.count_nonzero(V) < np.count_nonzero(W)


def test_detect_saddle():
    grid, u = cosine_field()
    critical = detect_critical_set(u, tau_z=0.1)

    assert len(critical.components) == 1
    component = critical.components[0]
    assert component.kind == 'point'
    assert abs(component.centroid[0] - 0.5 * math.pi) < 2 * grid.h
    assert abs(component.centroid[1] - 0.5 * math.pi) < 2 * grid.h

    strata = extract_strata(critical)
    assert len(strata.points) == 1
    point = strata.points[0]
    assert abs(point.x - 0.5 * math.pi) < 1e-3
    assert abs(point.y - 0.5 * math.pi) < 1e-3
    assert strata.M == 0
    assert np.count_nonzero(strata.core) == 1

    data = critical.to_dict()
    assert data['kind'] == 'critical'
    assert data['components'][0]['kind'] == 'point'


def test_default_threshold():
    grid, u = cosine_field()
    critical = detect_critical_set(u)

    # 10 h max |D^2 u| with max |D^2 u| close to one
    assert critical.tau_z == pytest.approx(10 * grid.h, rel=0.05)

    # the corner of W near the origin is flat as well
    saddle = [c for c in critical.components
              if math.hypot(c.centroid[0] - 0.5 * math.pi,
                            c.centroid[1] - 0.5 * math.pi) < 0.1]
    assert len(saddle) == 1


def test_constant_field_is_degenerate():
    grid = build_grid(Domain.rectangle(1, 1), 16)
    u = grid.evaluate(lambda x, y: np.ones_like(x))

    with pytest.raises(DegenerateFieldError):
        detect_critical_set(u)

    with pytest.raises(PreconditionError):
        detect_critical_set(u, tau_z=0)


def test_nodal_line():
    grid = build_grid(Domain.rectangle(2, 2), 64)
    u = grid.evaluate(lambda x, y: x - 1)
    nodal = detect_nodal_set(u)

    assert nodal.kind == 'nodal'
    assert nodal.tau_z == pytest.approx(2 * grid.h)
    assert [c.kind for c in nodal.components] == ['curve']

    strata = extract_strata(nodal)
    assert len(strata.pieces) >= 1
    assert len(strata.points) == 0

    longest = max(strata.pieces, key=lambda p: len(p.base))
    assert longest.axis == 2
    assert np.allclose(longest.values, 1, atol=2 * grid.h)
    assert longest.M < 0.5

    dist = strata_distance(strata, grid)
    assert abs(dist.values[32, 16] - 0.5) < 2 * grid.h


def test_extract_strata_empty():
    grid = build_grid(Domain.rectangle(1, 1), 16)
    empty = critical_set_from_mask(np.zeros(grid.shape, dtype=bool), grid)

    assert empty.empty
    with pytest.raises(PreconditionError):
        extract_strata(empty)


def test_monotone_pieces():
    # a quarter circle turns from vertical to horizontal
    phi = np.linspace(0, 0.5 * math.pi, 60)
    points = np.column_stack([np.cos(phi), np.sin(phi)])
    pieces = monotone_pieces(points)

    assert {p.axis for p in pieces} == {1, 2}
    for p in pieces:
        assert np.all(np.diff(p.base) > 0)
        assert p.M <= 1.5

    # a full circle needs at least four graph pieces
    phi = np.linspace(0, 2 * math.pi, 120, endpoint=False)
    points = np.column_stack([np.cos(phi), np.sin(phi)])
    assert len(monotone_pieces(points, cyclic=True)) >= 4


def test_strata_distance():
    grid = build_grid(Domain.rectangle(2, 2), 16)
    dist = strata_distance(point_strata(grid), grid)

    assert np.allclose(dist.values, np.hypot(grid.X - 1, grid.Y - 1))


def test_slab_cover_of_point():
    grid = build_grid(Domain.rectangle(2, 2), 64)
    strata = point_strata(grid)

    cover = build_slab_cover(strata, 0.25, grid)
    assert cover[32, 32]
    assert not cover[0, 32]
    assert np.all(np.abs(grid.Y[cover] - 1) < 0.25)

    with pytest.raises(PreconditionError):
        build_slab_cover(strata, 0, grid)

    with pytest.raises(PreconditionError):
        build_slab_cover(strata, 0.25, grid, R=0.5)


def test_slab_cover_of_graph():
    grid = build_grid(Domain.rectangle(2, 2), 32)
    piece = GraphPiece(1, np.array([0.5, 1.5]), np.array([1.0, 1.0]), 0.0)
    strata = StrataDecomposition((piece,), np.zeros(grid.shape, dtype=bool))
    cover = build_slab_cover(strata, 0.2, grid)

    assert np.array_equal(cover, (np.abs(grid.Y - 1) < 0.2) & grid.valid)


def test_tube_constants():
    grid = build_grid(Domain.rectangle(2, 2), 64)
    tube = fit_tube_constants(point_strata(grid), grid)

    # the slab around a point is a strip of width 2 eta across the domain
    assert tube.exponent == pytest.approx(1, abs=0.1)
    assert tube.C1 == pytest.approx(4, rel=0.2)
    assert tube.C2 >= 1 - 1e-9
    assert tube.C2_analytic == 0.5
    assert list(tube.table.columns) == ['eta', 'vol', 'vol_over_eta',
                                        'min_dist_ratio']

    ball = fit_tube_constants(point_strata(grid), grid, cover='ball')
    assert ball.exponent == pytest.approx(2, abs=0.15)
    assert ball.cover == 'ball'

    distance = strata_distance(point_strata(grid), grid)
    inner = build_ball_cover(point_strata(grid), 0.5, grid, distance)
    assert np.all(distance.values[inner] < 0.5)


def test_tube_constants_errors():
    grid = build_grid(Domain.rectangle(2, 2), 16)

    with pytest.raises(PreconditionError):
        fit_tube_constants(point_strata(grid), grid, etas=[0.1, 0.2, 0.4])

    with pytest.raises(PreconditionError):
        fit_tube_constants(point_strata(grid), grid,
                           etas=[0.1, 0.2, 0.4, 2.0])

    empty = StrataDecomposition((), np.zeros(grid.shape, dtype=bool))
    with pytest.raises(RefusalError):
        fit_tube_constants(empty, grid)


def test_lojasiewicz_fit():
    grid, u = cosine_field()
    critical = detect_critical_set(u, tau_z=0.1)
    strata = extract_strata(critical)
    V = nested_regions(grid)['V']

    fit = fit_lojasiewicz(u, identity_matrix(), critical, V, strata,
                          fit_radius=0.5)

    # |grad u|^2 grows quadratically away from the saddle
    assert 1.5 < fit.r < 2.5
    assert not fit.non_binding
    assert fit.C3 > 0
    assert fit.coverage > 0.95
    assert fit.n_fit <= fit.n_nodes
    assert list(fit.samples.columns) == ['log_d', 'log_f', 'bin', 'weight']


def test_lojasiewicz_fit_of_given_density():
    grid, u = cosine_field()
    critical = detect_critical_set(u, tau_z=0.1)
    strata = extract_strata(critical)
    V = nested_regions(grid)['V']

    d = strata_distance(strata, grid).values
    density = GridField(grid, d ** 4)
    fit = fit_lojasiewicz(u, identity_matrix(), critical, V, strata,
                          fit_radius=0.5, density=density)

    assert 3.8 <= fit.r <= 4.2
    assert fit.C3 == pytest.approx(1, rel=0.05)
    assert fit.coverage > 0.95


def test_lojasiewicz_refuses_empty_set():
    grid, u = cosine_field(16)
    empty = critical_set_from_mask(np.zeros(grid.shape, dtype=bool), grid)

    with pytest.raises(RefusalError):
        fit_lojasiewicz(u, identity_matrix(), empty, grid.interior)


def test_level_measure_profile():
    grid = build_grid(Domain.rectangle(1, 1), 64)
    f = grid.evaluate(lambda x, y: np.maximum(x, 0.5))
    Z = np.zeros(grid.shape, dtype=bool)
    Z[:, 49] = True

    profile = level_measure_profile(f, [0.5, 0.7654], Z, eps=[0.1, 0.02])

    # f is constant on the left half, so t = 0.5 is exceptional
    assert profile.exceptional == [0.5]
    assert profile.M_f == pytest.approx(1, abs=1e-9)

    table = profile.table
    assert table[table['t'] == 0.5]['measure'].isna().all()
    assert list(profile.sup_by_eps['eps']) == [0.1, 0.02]
    assert profile.sup_by_eps['sup'].iloc[0] == pytest.approx(1, abs=1e-9)

    with pytest.raises(PreconditionError):
        level_measure_profile(GridField(grid, 1j * f.values), [0.5])


def test_level_profile_of_cosine():
    grid = build_grid(Domain.rectangle(2, 2), 64)
    f = grid.evaluate(lambda x, y: np.cos(x))
    Z = np.zeros(grid.shape, dtype=bool)
    Z[32, 32] = True

    # every level set is a vertical segment across the domain
    ts = np.linspace(-0.3, 0.95, 12)
    profile = level_measure_profile(f, ts, Z, eps=[0.5, 0.1, 0.01])

    assert not profile.exceptional
    assert 1.9 <= profile.M_f <= 2.2

    sup = list(profile.sup_by_eps['sup'])
    assert list(profile.sup_by_eps['eps']) == [0.5, 0.1, 0.01]
    assert sup[0] >= sup[1] >= sup[2]
    assert sup[2] < 0.05
