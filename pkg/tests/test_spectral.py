import math

import numpy as np
import pytest
from scipy import linalg

from src.semilab.errors import PeriodicRegimeError, PreconditionError, ShapeError
from src.semilab.spectral import (
    check_conditions_P_I,
    jordan_growth,
    perron_limit,
    pole_part,
    quasicompact_split,
    rank_one_residual,
    remainder_norm,
    remainder_part,
)


def _symmetric_intensity(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.1, 1.0, size=(n, n))
    Q = 0.5 * (A + A.T)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def test_conditions_report():
    report = check_conditions_P_I([[-1.0, 1.0], [0.0, 0.0]])
    assert report.P and not report.I
    assert not check_conditions_P_I([[0.0, -1.0], [1.0, 0.0]]).P


def test_perron_limit_of_intensity_matrix(random_intensity):
    Q = random_intensity(5)
    limit = perron_limit(Q)
    assert limit.r == pytest.approx(0.0, abs=1e-10)
    assert np.all(limit.x_star > 0) and np.all(limit.y_star > 0)
    np.testing.assert_allclose(limit.x_star @ Q, 0.0, atol=1e-10)
    assert float(np.dot(limit.y_star, limit.x_star)) == pytest.approx(1.0)
    assert limit.gap > 0


def test_perron_limit_of_shifted_matrix():
    Q = np.array([[1.0, 2.0, 0.5], [0.3, -1.0, 1.0], [1.0, 1.0, 0.0]])
    limit = perron_limit(Q)
    assert limit.r == pytest.approx(max(linalg.eigvals(Q).real))
    assert rank_one_residual(Q, 40.0, [1.0, 0.0, 0.0], limit) < 1e-8


def test_perron_requires_conditions():
    with pytest.raises(PreconditionError):
        perron_limit([[-1.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ShapeError):
        perron_limit([[1.0, 2.0]])


def test_rank_one_residual_decays_at_spectral_gap():
    Q = _symmetric_intensity(5, seed=4)
    limit = perron_limit(Q)
    eigenvalues = np.sort(linalg.eigvalsh(Q))
    gap = -eigenvalues[-2]
    assert limit.gap == pytest.approx(gap, rel=1e-8)
    t_max = min(30.0, 25.0 / gap)
    times = np.linspace(0.5 * t_max, t_max, 40)
    x = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    residuals = np.array([rank_one_residual(Q, t, x, limit) for t in times])
    slope = np.polyfit(times, np.log(residuals), 1)[0]
    assert -slope == pytest.approx(gap, rel=0.1)


def test_jordan_block_growth():
    growth = jordan_growth([[1.0, 1.0], [0.0, 1.0]], [1.0, 1.0])
    assert growth.r == pytest.approx(1.0)
    assert growth.k == 2
    np.testing.assert_allclose(growth.limit, [0.0, 1.0], atol=1e-10)
    np.testing.assert_allclose(growth.ladder_estimate, [0.0, 1.0], atol=1e-8)
    t = 1000.0
    scaled = np.array([1.0, 1.0]) @ linalg.expm(t * np.array([[0.0, 1.0], [0.0, 0.0]])) / t
    assert np.abs(scaled - growth.limit).sum() < 3e-3


def test_diagonalizable_growth_has_order_one(random_intensity):
    growth = jordan_growth(random_intensity(4), [0.25, 0.25, 0.25, 0.25])
    assert growth.k == 1
    assert growth.limit.sum() == pytest.approx(1.0, abs=1e-8)


def test_complex_dominant_pair_is_periodic():
    with pytest.raises(PeriodicRegimeError) as info:
        jordan_growth([[0.0, 1.0], [-1.0, 0.0]], [1.0, 0.0])
    assert info.value.payload["period"] == pytest.approx(2.0 * math.pi)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_quasicompact_reconstruction(random_intensity, seed):
    Q = random_intensity(6, seed=seed)
    split = quasicompact_split(Q, cutoff=-1.0)
    for t in (0.0, 1.0, 5.0, 10.0):
        np.testing.assert_allclose(pole_part(split, t) + remainder_part(split, t), linalg.expm(t * Q), atol=1e-8)
    M, epsilon = split.remainder_bound
    assert epsilon > 0
    for t in np.geomspace(1e-2, 50.0, 20):
        assert remainder_norm(split, t) <= M * math.exp((-1.0 - epsilon) * t) + 1e-12


def test_split_of_jordan_block():
    split = quasicompact_split([[1.0, 1.0], [0.0, 1.0]], cutoff=0.0)
    assert split.orders == [2]
    assert split.remainder_dimension == 0
    assert split.remainder_bound == (0.0, None)
    np.testing.assert_allclose(pole_part(split, 2.0), math.exp(2.0) * np.array([[1.0, 2.0], [0.0, 1.0]]), rtol=1e-10)


def test_split_rejects_eigenvalue_on_cutoff(random_intensity):
    with pytest.raises(PreconditionError):
        quasicompact_split(random_intensity(3), cutoff=0.0)
