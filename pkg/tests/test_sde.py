import json
import math

import numpy as np
import pytest
from scipy import stats

from src.semilab.density import Grid1D
from src.semilab.errors import CriticalCaseError, DomainError, PreconditionError, ValidationError
from src.semilab.numerics import RandomStream
from src.semilab.sde import (
    MODEL_REGISTRY,
    GrowthModel,
    classify,
    em_ensemble,
    em_simulate,
    empirical_vs_stationary,
    stationary_density,
)


@pytest.fixture
def logistic():
    return MODEL_REGISTRY["logistic"](1.0)


def test_model_validation():
    with pytest.raises(ValidationError):
        GrowthModel(lambda x: x + 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValidationError):
        GrowthModel.polynomial([0.0, 1.0, 1.0], 1.0)
    with pytest.raises(DomainError):
        GrowthModel.logistic(-1.0)


def test_logistic_stationary_density_closed_form(logistic):
    density = stationary_density(logistic)
    assert density.exists
    x = np.array([0.01, 0.3, 1.0, 2.5, 5.0])
    np.testing.assert_allclose(density.evaluate(x), 2.0 * np.exp(-2.0 * x), atol=1e-6)


def test_flux_identity(logistic):
    density = stationary_density(logistic)
    x = np.linspace(0.05, 4.0, 50)
    assert np.abs(density.flux(x)).max() < 1e-8


def test_cell_masses_and_cdf(logistic):
    density = stationary_density(logistic)
    masses = density.cell_masses(Grid1D(lo=0.0, hi=10.0, n_cells=50))
    assert masses.total == pytest.approx(1.0 - math.exp(-20.0), abs=1e-8)
    assert density.cdf(1.0) == pytest.approx(1.0 - math.exp(-2.0), abs=1e-8)


def test_inverse_cdf_sampler(logistic):
    draws = stationary_density(logistic).sample(RandomStream(3), 20_000)
    assert stats.kstest(draws, stats.expon(scale=0.5).cdf).statistic < 0.015


@pytest.mark.parametrize(
    "factory, sigma2, regime",
    [("logistic", 1.0, "stationary"), ("logistic", 3.0, "extinct"), ("malthus", 1.0, "grows")],
)
def test_classify(factory, sigma2, regime):
    assert classify(MODEL_REGISTRY[factory](sigma2)).regime == regime


def test_classify_bistable_and_critical():
    model = GrowthModel.polynomial([0.0, 0.5, 0.0], 2.0)
    with pytest.raises(CriticalCaseError):
        classify(GrowthModel.logistic(2.0))
    low = GrowthModel(lambda x: 0.25 * x + 0.75 * x * x / (1.0 + x), 1.0, 0.25, 1.0)
    assert classify(low).regime == "bistable"
    assert classify(model).regime == "extinct"


def test_no_density_outside_stationary_regime():
    density = stationary_density(MODEL_REGISTRY["malthus"](1.0))
    assert not density.exists
    with pytest.raises(PreconditionError):
        density.evaluate(1.0)
    with pytest.raises(PreconditionError):
        empirical_vs_stationary(MODEL_REGISTRY["malthus"](1.0), 1.0, 1e-2, 1.0, 0.0, 0.1, Grid1D(lo=0, hi=1, n_cells=4), RandomStream(0))


def test_drift_file_matches_registry(tmp_path, logistic):
    path = tmp_path / "drift.json"
    path.write_text(json.dumps({"breakpoints": [0.0], "pieces": [[0.0, 1.0, -1.0]], "name": "file"}))
    model = GrowthModel.from_file(path, 1.0)
    assert model.b_prime_0 == pytest.approx(1.0)
    assert model.b_prime_inf == -math.inf
    x = np.array([0.2, 1.0, 3.0])
    np.testing.assert_allclose(stationary_density(model).evaluate(x), stationary_density(logistic).evaluate(x), rtol=1e-8)


def test_em_reflects_at_zero():
    model = GrowthModel.logistic(4.0)
    times, samples = em_simulate(model, np.full(8, 0.1), 1e-2, 5.0, RandomStream(5), sample_every=0.5)
    assert np.all(samples >= 0)
    assert times[-1] == pytest.approx(5.0)


def test_em_ensemble_ignores_thread_count(logistic):
    one = em_ensemble(logistic, 1.0, 1e-2, 1.0, 250, RandomStream(9), threads=1, chunk=100)
    four = em_ensemble(logistic, 1.0, 1e-2, 1.0, 250, RandomStream(9), threads=4, chunk=100)
    np.testing.assert_array_equal(one, four)
    assert one.shape == (250,)


@pytest.mark.slow
def test_time_average_approaches_stationary_law(logistic):
    distance = empirical_vs_stationary(
        logistic, 1.0, 1e-3, 2050.0, 50.0, 0.1, Grid1D(lo=0.0, hi=3.0, n_cells=30), RandomStream(2025), n_paths=16,
    )
    assert distance < 0.05
