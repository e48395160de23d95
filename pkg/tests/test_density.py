import numpy as np
import pandas as pd
import pytest

from src.semilab.density import (
    Grid1D,
    GridDensity,
    PiecewisePoly,
    ProductDensity,
    chain_grid,
    histogram_from_samples,
    l1_distance,
    mass_in_window,
    negative_part_norm,
    normalize,
)
from src.semilab.errors import DegenerateInputError, DomainError, ShapeError, ValidationError


@pytest.fixture
def grid():
    return Grid1D(lo=0.0, hi=1.0, n_cells=10)


def test_grid_geometry(grid):
    assert grid.width == pytest.approx(0.1)
    assert grid.edges[-1] == 1.0
    assert grid.centers[0] == pytest.approx(0.05)
    np.testing.assert_array_equal(grid.index_of(np.array([0.0, 0.15, 1.0])), [0, 1, 9])


def test_grid_validation():
    with pytest.raises(Exception):
        Grid1D(lo=1.0, hi=0.0, n_cells=3)
    with pytest.raises(Exception):
        Grid1D(lo=0.0, hi=1.0, n_cells=0)


def test_chain_grid_centres_on_states():
    np.testing.assert_allclose(chain_grid(4).centers, [0, 1, 2, 3])


def test_uniform_and_from_cdf(grid):
    u = GridDensity.uniform(grid)
    assert u.is_density()
    f = GridDensity.from_cdf(grid, lambda x: x ** 2)
    assert f.total == pytest.approx(1.0)
    assert f.masses[0] == pytest.approx(0.01)
    assert l1_distance(u, u) == 0.0


def test_masses_are_read_only(grid):
    f = GridDensity.uniform(grid)
    with pytest.raises(ValueError):
        f.masses[0] = 1.0


def test_shape_mismatch(grid):
    with pytest.raises(ShapeError):
        GridDensity(grid, np.ones(3))
    other = GridDensity.uniform(Grid1D(lo=0.0, hi=1.0, n_cells=5))
    with pytest.raises(ShapeError):
        l1_distance(GridDensity.uniform(grid), other)


def test_window_mass_snaps_outward(grid):
    f = GridDensity.uniform(grid)
    assert mass_in_window(f, 0.25, 0.45) == pytest.approx(0.3)
    with pytest.raises(DomainError):
        mass_in_window(f, 0.5, 2.0)


def test_negative_part(grid):
    f = GridDensity.uniform(grid)
    h = GridDensity.point_mass(grid, 0)
    assert negative_part_norm(f, h) == pytest.approx(0.9)


def test_normalize_clips_tiny_negatives():
    f = normalize([1.0, -1e-16, 3.0])
    np.testing.assert_allclose(f.masses, [0.25, 0.0, 0.75])
    with pytest.raises(DomainError):
        normalize([1.0, -1e-3])
    with pytest.raises(DegenerateInputError):
        normalize([0.0, 0.0])


def test_histogram_reports_out_of_range(grid):
    f = histogram_from_samples([0.05, 0.05, 0.95, 2.0], grid)
    assert f.out_of_range == pytest.approx(0.25)
    assert f.masses[0] == pytest.approx(2 / 3)
    with pytest.raises(DegenerateInputError):
        histogram_from_samples([], grid)


def test_csv_round_trip(tmp_path, grid):
    f = GridDensity.from_cdf(grid, lambda x: x ** 3)
    path = tmp_path / "f.csv"
    f.to_csv(path)
    assert list(pd.read_csv(path).columns) == ["cell_lo", "cell_hi", "mass"]
    np.testing.assert_array_equal(GridDensity.from_csv(path).masses, f.masses)


def test_product_density_marginal(grid):
    masses = np.full((10, 2), 0.05)
    p = ProductDensity(grid, masses, states=[-1, 1])
    assert p.is_density()
    np.testing.assert_allclose(p.marginal().masses, 0.1)
    np.testing.assert_allclose(p.state(1), 0.05)
    assert set(p.to_frame()["state"]) == {-1, 1}


def test_piecewise_poly_exact_norms():
    f = PiecewisePoly([0.0, 1.0], [[0.0, 0.0, 3.0]])
    assert f.integral() == pytest.approx(1.0)
    assert (f - 1.0).l1_norm() == pytest.approx(4.0 / (3.0 * np.sqrt(3.0)), abs=1e-14)
    assert f.lipschitz() == pytest.approx(6.0)
    assert f(0.5) == pytest.approx(0.75)


def test_piecewise_poly_validation():
    with pytest.raises(ValidationError):
        PiecewisePoly([0.0, 0.0], [[1.0]])
    with pytest.raises(ShapeError):
        PiecewisePoly([0.0, 0.5, 1.0], [[1.0]])
    with pytest.raises(ValidationError):
        PiecewisePoly([0.0, 1.0], [[0, 0, 0, 0, 1.0]])
