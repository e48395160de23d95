import math

import numpy as np
import pytest

from src.semilab.density import Grid1D, GridDensity, PiecewisePoly, l1_distance
from src.semilab.errors import BoundaryPointError, DomainError, NonConvergenceError
from src.semilab.transfer import (
    MAP_REGISTRY,
    conjugate_transport,
    exactness_profile,
    fp_apply_pointwise,
    fp_tent_exact,
    invariant_density,
    logistic_conjugacy,
    logistic_invariant_cdf,
    rebin_by_preimage,
    tent_iterate_profile,
    ulam_matrix,
)


def test_registry_builds_all_maps():
    for name, factory in MAP_REGISTRY.items():
        phi = factory()
        assert phi.lo == 0.0 and phi.hi == 1.0, name


def test_pointwise_tent_preserves_lebesgue():
    tent = MAP_REGISTRY["tent"]()
    assert fp_apply_pointwise(tent, lambda x: 1.0, 0.3) == pytest.approx(1.0)
    assert fp_apply_pointwise(tent, lambda x: 3.0 * x * x, 0.0) == pytest.approx(1.5)
    with pytest.raises(DomainError):
        fp_apply_pointwise(tent, lambda x: 1.0, 1.5)


def test_pointwise_rejects_interior_image_boundary():
    doubling = MAP_REGISTRY["doubling"]()
    assert fp_apply_pointwise(doubling, lambda x: 1.0, 0.5) == pytest.approx(1.0)
    identity = MAP_REGISTRY["identity"](0.0, 2.0)
    assert fp_apply_pointwise(identity, lambda x: x, 1.0) == pytest.approx(1.0)
    logistic = MAP_REGISTRY["logistic"]()
    with pytest.raises(BoundaryPointError):
        fp_apply_pointwise(logistic, lambda x: 1.0, 1.0)


def test_tent_exact_engine_preserves_mass():
    f = PiecewisePoly([0.0, 1.0], [[0.0, 0.0, 3.0]])
    g = fp_tent_exact(f)
    assert g.integral() == pytest.approx(1.0, abs=1e-14)
    assert g.is_continuous()
    assert g(0.0) == pytest.approx(1.5)


def test_tent_exactness_bound():
    f0 = PiecewisePoly([0.0, 1.0], [[0.0, 0.0, 3.0]])
    distances, lipschitz = tent_iterate_profile(f0, 20)
    assert lipschitz[0] == pytest.approx(6.0)
    for n in range(1, 21):
        assert distances[n] <= 6.0 / 2 ** n
        assert lipschitz[n] <= 6.0 / 2 ** n + 1e-12
    assert np.all(np.diff(distances) <= 1e-14)


def test_tent_ulam_is_doubly_stochastic():
    U = ulam_matrix(MAP_REGISTRY["tent"](), 1024)
    np.testing.assert_allclose(U.row_sums(), 1.0, atol=1e-12)
    f = invariant_density(U)
    assert l1_distance(f, GridDensity.uniform(U.grid)) < 1e-12


def test_ulam_needs_two_cells():
    with pytest.raises(DomainError):
        ulam_matrix(MAP_REGISTRY["tent"](), 1)


def test_logistic_ulam_invariant_density():
    U = ulam_matrix(MAP_REGISTRY["logistic"](), 4096)
    f = invariant_density(U, tol=1e-11)
    oracle = GridDensity.from_cdf(U.grid, logistic_invariant_cdf)
    assert l1_distance(f, oracle) < 0.02


def test_power_iteration_reports_non_convergence():
    U = ulam_matrix(MAP_REGISTRY["logistic"](), 256)
    with pytest.raises(NonConvergenceError) as info:
        invariant_density(U, tol=1e-300, max_iter=3)
    assert len(info.value.payload["last_iterate"]) == 256


def test_conjugacy_route_matches_oracle():
    grid = Grid1D(lo=0.0, hi=1.0, n_cells=1000)
    alpha, alpha_inverse = logistic_conjugacy()
    g = conjugate_transport(alpha, GridDensity.uniform(grid), alpha_inverse)
    oracle = GridDensity.from_cdf(g.grid, logistic_invariant_cdf)
    assert l1_distance(g, oracle) < 1e-3
    bisected = conjugate_transport(alpha, GridDensity.uniform(grid), target_grid=g.grid)
    assert l1_distance(g, bisected) < 1e-9


def test_conjugacy_rejects_non_monotone():
    grid = Grid1D(lo=0.0, hi=1.0, n_cells=10)
    with pytest.raises(DomainError):
        conjugate_transport(lambda x: x * (1.0 - x), GridDensity.uniform(grid))


def test_rebin_by_preimage_conserves_mass():
    grid = Grid1D(lo=0.0, hi=1.0, n_cells=4)
    masses = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(rebin_by_preimage(masses, grid, grid.edges), masses)
    reversed_edges = 1.0 - grid.edges
    np.testing.assert_allclose(rebin_by_preimage(masses, grid, reversed_edges), masses[::-1])
    halves = rebin_by_preimage(masses, grid, np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(halves, [0.3, 0.7])


def test_exactness_profile_for_tent_decays():
    U = ulam_matrix(MAP_REGISTRY["tent"](), 256)
    f0 = GridDensity.from_cdf(U.grid, lambda x: x ** 3)
    d = exactness_profile(U, f0, 12, f_star=GridDensity.uniform(U.grid))
    assert d[0] > 0.1
    assert d[-1] < 1e-2
    assert math.isclose(d[0], l1_distance(f0, GridDensity.uniform(U.grid)))


def test_exactness_profile_for_logistic_map_from_uniform():
    U = ulam_matrix(MAP_REGISTRY["logistic"](), 4096)
    f0 = GridDensity.uniform(U.grid)
    d = exactness_profile(U, f0, 30, f_star=invariant_density(U, tol=1e-11))
    assert d[-1] < 0.05
    assert d[-1] < d[0]
    oracle = GridDensity.from_cdf(U.grid, logistic_invariant_cdf)
    assert exactness_profile(U, f0, 30, f_star=oracle)[-1] < 0.05
