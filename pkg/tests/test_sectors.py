from coefstab.errors import NotAdmissibleError, PreconditionError, \
        ResolutionError
from coefstab.grid import build_grid, gradient
from coefstab.sectors import SectorDecomposition, cutoff_tau, \
        reduce_angles, sector_decompose, sufficient_condition_check, \
        theta_clamped, theta_field
from coefstab.types import Domain, GridField
import math
import numpy as np
import pytest

SIGMA = 0.1 * math.pi


def constant_psi(value, n=16):
    grid = build_grid(Domain.rectangle(1, 1), n)
    return GridField(grid, np.full(grid.shape, value, dtype=complex))


def test_sufficient_condition():
    psi = constant_psi(1 + 0.1j)

    assert sufficient_condition_check(psi, 0.2, SIGMA)
    assert not sufficient_condition_check(psi, 0.05, SIGMA)

    with pytest.raises(PreconditionError):
        sufficient_condition_check(psi, 1.5, SIGMA)


def test_real_psi_is_admissible():
    grid = build_grid(Domain.rectangle(1, 1), 32)
    psi = grid.evaluate(lambda x, y: 1 + x * y + 0j)
    sectors = sector_decompose(psi, SIGMA)

    assert sectors.admissible
    assert not sectors.vacuous
    assert len(sectors) == 4
    assert all(sectors.gap(k) <= math.pi - SIGMA + 1e-12
               for k in range(len(sectors)))
    assert sum(sectors.gap(k) for k in range(len(sectors))) == \
        pytest.approx(2 * math.pi)


def test_zero_psi_is_vacuous():
    sectors = sector_decompose(constant_psi(0), SIGMA)

    assert sectors.admissible
    assert sectors.vacuous
    assert len(sectors) == 4


def test_rotating_psi_is_not_admissible():
    grid = build_grid(Domain.rectangle(2 * math.pi, 1), 64)
    psi = grid.evaluate(lambda x, y: np.exp(1j * x))
    sectors = sector_decompose(psi, SIGMA)

    assert not sectors.admissible
    assert sectors.witness is not None
    assert sectors.measures['good'].sum() < len(sectors.measures)

    with pytest.raises(NotAdmissibleError):
        theta_field(psi, sectors, 0)


def test_invalid_sigma():
    with pytest.raises(PreconditionError):
        sector_decompose(constant_psi(1), 1.0)


def test_reduce_angles():
    angles = [k * math.pi / 4 for k in range(8)]
    reduced = reduce_angles(angles, SIGMA)

    assert 2 <= len(reduced) <= 4
    assert set(reduced) <= set(angles)

    extended = reduced + [reduced[0] + 2 * math.pi]
    assert np.all(np.diff(extended) <= math.pi - SIGMA + 1e-12)

    # already four or fewer: unchanged
    assert reduce_angles([0, 1, 2, 3], SIGMA) == [0, 1, 2, 3]

    with pytest.raises(PreconditionError):
        reduce_angles([0, math.pi], SIGMA)


def test_theta_field():
    psi = constant_psi(1)
    sectors = sector_decompose(psi, SIGMA)

    # the sector containing the positive real axis is the last one
    last = len(sectors) - 1
    assert np.allclose(theta_field(psi, sectors, last).values, 1)

    for k in range(last):
        assert np.all(theta_field(psi, sectors, k).values < 0)

    with pytest.raises(PreconditionError):
        theta_field(psi, sectors, len(sectors))


def test_sector_decomposition_geometry():
    sectors = SectorDecomposition((0.0, 0.5 * math.pi, math.pi,
                                   1.5 * math.pi), SIGMA)

    assert sectors.gap(3) == pytest.approx(0.5 * math.pi)
    assert sectors.slope(0) == pytest.approx(1.0)
    assert sectors.beta(0) == pytest.approx(np.exp(-0.25j * math.pi))

    data = sectors.to_dict()
    assert data['admissible']
    assert len(data['sectors']) == 4


def test_theta_clamped():
    psi = constant_psi(1)
    theta = GridField(psi.grid, np.full(psi.grid.shape, 0.5))
    clamped, band = theta_clamped(theta, 1.0)

    assert np.allclose(clamped.values, 0.5)
    assert np.all(band)

    clamped, band = theta_clamped(theta, 0.25)
    assert np.allclose(clamped.values, 1)
    assert not np.any(band)

    with pytest.raises(PreconditionError):
        theta_clamped(theta, 0)


def test_cutoff_tau():
    grid = build_grid(Domain.rectangle(1, 1), 32)
    h_band = 0.25
    tau = cutoff_tau(grid.interior, h_band, grid)

    assert tau.values[16, 16] == 1
    assert np.all(tau.values[grid.boundary] == 0)
    assert np.all((tau.values >= 0) & (tau.values <= 1))

    tx, ty = gradient(tau)
    assert np.max(np.hypot(tx.values, ty.values)) <= 1.1 * 3 / h_band

    with pytest.raises(ResolutionError):
        cutoff_tau(grid.interior, 0.05, grid)


def random_angles(rng, sigma):
    while True:
        n = int(rng.integers(3, 13))
        gaps = rng.dirichlet(np.ones(n)) * 2 * math.pi
        if np.max(gaps) <= math.pi - sigma:
            break

    start = rng.uniform(0, 2 * math.pi)
    return list(start + np.concatenate([[0.0], np.cumsum(gaps[:-1])]))


def test_reduce_angles_random():
    rng = np.random.default_rng(7)

    for _ in range(1000):
        angles = random_angles(rng, SIGMA)
        reduced = reduce_angles(angles, SIGMA)

        assert len(reduced) <= 4
        assert len(reduced) == min(len(angles), 4)
        assert set(reduced) <= set(angles)

        extended = reduced + [reduced[0] + 2 * math.pi]
        assert np.all(np.diff(extended) <= math.pi - SIGMA + 1e-12)


def test_sectors_cover_the_plane():
    grid = build_grid(Domain.rectangle(2 * math.pi, 1), 64)
    psi = grid.evaluate(lambda x, y: (1 + y) * np.exp(1j * x))
    sectors = SectorDecomposition((0.3, 1.9, 3.5, 5.0), SIGMA)

    thetas = np.stack([theta_field(psi, sectors, k).values
                       for k in range(len(sectors))])
    tol = 1e-12

    # every argument lies in a closed sector and in at most one open one
    assert np.all(np.sum(thetas >= -tol, axis=0) >= 1)
    assert np.all(np.sum(thetas > tol, axis=0) <= 1)

    # interior nodes of sector 1 have their argument strictly inside it
    arg = np.angle(psi.values) % (2 * math.pi)
    inside = thetas[1] > tol
    assert np.any(inside)
    assert np.all((arg[inside] > 1.9) & (arg[inside] < 3.5))


def test_theta_clamped_converges():
    grid = build_grid(Domain.rectangle(2, 2), 64)
    psi = grid.evaluate(lambda x, y: 0.2 * x * y)
    sectors = sector_decompose(psi, SIGMA)
    theta = theta_field(psi, sectors, len(sectors) - 1)

    # the clamped field increases to the indicator of {theta > 0}
    indicator = (theta.values > 0).astype(float)
    previous, distances = None, []
    for h_band in (0.2, 0.1, 0.05):
        clamped, band = theta_clamped(theta, h_band)
        if previous is not None:
            assert np.all(clamped.values >= previous - 1e-15)
        previous = clamped.values
        distances.append(np.sum(np.abs(indicator - clamped.values)))
        assert np.any(band)

    assert distances[0] > distances[1] > distances[2]
