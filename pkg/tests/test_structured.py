import math

import numpy as np
import pytest

from src.semilab._default import RENEWAL_SANITY_RATE
from src.semilab.density import Grid1D, GridDensity
from src.semilab.errors import DegenerateInputError, DomainError, ModelAssumptionError, ShapeError, StepSizeError, ValidationError
from src.semilab.structured import (
    McKendrickModel,
    SizeDivisionModel,
    aeg_residual,
    benchmark_cellcycle,
    cellcycle_evolve,
    cellcycle_frame,
    check_assumptions,
    lotka_rate,
    malthus_estimate,
    mckendrick_evolve,
    renewal_rate,
    size_age_pushforward,
    size_division_evolve,
    stable_age_profile,
    uniform_birth_sizes,
    window_rates,
)


def _fertile_window(a):
    return 2.0 if 1.0 <= a <= 2.0 else 0.0


def _young(grid: Grid1D) -> GridDensity:
    return GridDensity.from_cdf(grid, lambda a: np.clip(a, 0.0, 1.0))


# growth helpers

def test_malthus_estimate_recovers_exponential_rate():
    t = np.linspace(0.0, 10.0, 101)
    fit = malthus_estimate(t, 3.0 * np.exp(0.25 * t), window=(2.0, 8.0))
    assert fit.lambda_hat == pytest.approx(0.25, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert malthus_estimate(t, np.ones_like(t)).r_squared == 1.0


def test_malthus_estimate_errors():
    t = np.linspace(0.0, 1.0, 11)
    with pytest.raises(DomainError):
        malthus_estimate(t, np.zeros_like(t))
    with pytest.raises(DegenerateInputError):
        malthus_estimate(t, np.ones_like(t), window=(0.5, 0.5))


# McKendrick

def test_lotka_rate_solves_characteristic_equation():
    model = McKendrickModel(lambda a: 0.1, _fertile_window, 2.0, 400, breakpoints=[1.0])
    lam = lotka_rate(model)
    s = lam + 0.1
    assert 2.0 * (math.exp(-s) - math.exp(-2.0 * s)) / s == pytest.approx(1.0, abs=1e-9)
    assert lam == pytest.approx(0.368, abs=2e-3)


@pytest.mark.slow
def test_mckendrick_growth_matches_lotka_root():
    model = McKendrickModel(lambda a: 0.1, _fertile_window, 2.0, 400, breakpoints=[1.0])
    run = mckendrick_evolve(model, GridDensity.uniform(model.grid), model.grid.width, 40.0)
    fit = malthus_estimate(run.times, run.totals, window=(20.0, 40.0))
    assert fit.lambda_hat == pytest.approx(lotka_rate(model), abs=1e-3)
    assert fit.r_squared > 0.999
    residual = aeg_residual(run, fit.lambda_hat)
    middle = np.searchsorted(run.profile_times, 20.0)
    assert residual[middle] < 0.05


def test_mckendrick_transport_conserves_mass():
    model = McKendrickModel(lambda a: 0.0, lambda a: 0.0, 2.0, 200)
    run = mckendrick_evolve(model, _young(model.grid), model.grid.width, 0.5)
    np.testing.assert_allclose(run.totals, 1.0, atol=1e-12)


def test_mckendrick_constant_mortality_is_exact():
    model = McKendrickModel(lambda a: 0.3, lambda a: 0.0, 2.0, 200)
    run = mckendrick_evolve(model, _young(model.grid), model.grid.width, 0.5)
    np.testing.assert_allclose(run.totals, np.exp(-0.3 * run.times), rtol=1e-12)


def test_mckendrick_errors():
    model = McKendrickModel(lambda a: 0.1, lambda a: 0.0, 2.0, 100)
    with pytest.raises(DomainError):
        lotka_rate(model)
    with pytest.raises(StepSizeError):
        mckendrick_evolve(model, GridDensity.uniform(model.grid), 2.0 * model.grid.width, 1.0)
    with pytest.raises(ShapeError):
        mckendrick_evolve(model, GridDensity.uniform(Grid1D(lo=0.0, hi=2.0, n_cells=50)), 0.01, 1.0)
    with pytest.raises(ValidationError):
        McKendrickModel(lambda a: 0.1, lambda a: 0.0, math.inf, 100)
    with pytest.raises(ValidationError):
        McKendrickModel(lambda a: -1.0, lambda a: 0.0, 1.0, 100)


# size division

def _upper_band(grid: Grid1D) -> GridDensity:
    return GridDensity.from_cdf(grid, lambda x: np.clip((x - 10.5) / 0.5, 0.0, 1.0))


def test_size_division_without_division_conserves_mass():
    model = SizeDivisionModel(lambda x: 1.0, lambda x: 0.0, 20.0, 400)
    run = size_division_evolve(model, _upper_band(model.grid), model.grid.width, 15.0)
    np.testing.assert_allclose(run.totals, 1.0, atol=1e-12)
    assert run.final[-1] > 0.99


def test_size_division_upper_half_decays_while_total_grows():
    model = SizeDivisionModel(lambda x: 1.0, lambda x: 1.0, 20.0, 400)
    run = size_division_evolve(model, _upper_band(model.grid), 0.05, 1.0)
    assert run.final[200:].sum() == pytest.approx(0.95 ** 20, rel=1e-10)
    assert run.totals[-1] == pytest.approx(1.05 ** 20, rel=1e-10)
    assert np.all(run.final >= 0)


def test_size_division_errors():
    model = SizeDivisionModel(lambda x: 2.0, lambda x: 1.0, 10.0, 100)
    with pytest.raises(StepSizeError):
        size_division_evolve(model, GridDensity.uniform(model.grid), model.grid.width, 1.0)
    with pytest.raises(ValidationError):
        SizeDivisionModel(lambda x: -1.0, lambda x: 1.0, 10.0, 100)


# cell cycle

def test_benchmark_assumption_report():
    report = check_assumptions(benchmark_cellcycle())
    assert {k: report.checks[k] for k in ("A1", "A2", "A3", "A4", "A5", "A7")} == dict.fromkeys(
        ("A1", "A2", "A3", "A4", "A5", "A7"), True
    )
    assert report.checks["A6"] is False
    assert "A6" in report.details
    assert not report.all_hold


def test_renewal_rate_for_uniform_cycle_lengths():
    r = renewal_rate(benchmark_cellcycle())
    assert 2.0 * (math.exp(-r) - math.exp(-1.2 * r)) / (0.2 * r) == pytest.approx(1.0, abs=1e-9)
    assert r == pytest.approx(RENEWAL_SANITY_RATE, rel=0.1)


def test_stable_age_profile_keeps_row_masses():
    model = benchmark_cellcycle()
    rows = uniform_birth_sizes(model, 0.9, 1.3)
    u = stable_age_profile(model, rows)
    np.testing.assert_allclose(u.sum(axis=1), rows, atol=1e-14)
    assert u.sum() == pytest.approx(1.0)
    frame = cellcycle_frame(u, model)
    assert list(frame.columns) == ["xb_lo", "xb_hi", "a_lo", "a_hi", "mass"]
    assert frame["mass"].sum() == pytest.approx(1.0)


def test_size_pushforward_keeps_mass():
    model = benchmark_cellcycle()
    u = stable_age_profile(model, uniform_birth_sizes(model, 0.9, 1.3))
    w = size_age_pushforward(u, model)
    assert w.total == pytest.approx(1.0, abs=1e-10)
    assert w.grid.lo == pytest.approx(0.5)
    assert w.grid.hi == pytest.approx(2.8)


def test_cellcycle_division_doubles_removed_mass():
    model = benchmark_cellcycle()
    u0 = stable_age_profile(model, uniform_birth_sizes(model, 0.9, 1.3))
    run = cellcycle_evolve(model, u0, model.age_grid.width, 3.0)
    removed, injected = run.extra["removed"][1:], run.extra["injected"][1:]
    assert removed.max() > 0
    np.testing.assert_allclose(injected, 2.0 * removed, rtol=1e-10, atol=1e-15)


def test_cellcycle_errors():
    model = benchmark_cellcycle()
    with pytest.raises(ShapeError):
        cellcycle_evolve(model, np.zeros((3, 3)), 0.01, 1.0)
    with pytest.raises(StepSizeError):
        cellcycle_evolve(model, np.zeros(model.shape), 0.02, 1.0)
    narrow = benchmark_cellcycle(xb_hi=1.0, n_xb=50)
    assert check_assumptions(narrow).checks["A5"] is False
    with pytest.raises(ModelAssumptionError):
        cellcycle_evolve(narrow, np.zeros(narrow.shape), 0.01, 1.0)
    with pytest.raises(DomainError):
        uniform_birth_sizes(model, 0.1, 0.9)


@pytest.mark.slow
def test_cellcycle_growth_is_asynchronous_and_exponential():
    model = benchmark_cellcycle()
    oracle = renewal_rate(model)
    T = 60.0
    runs = []
    for lo, hi in ((0.9, 1.3), (0.6, 0.8)):
        u0 = stable_age_profile(model, uniform_birth_sizes(model, lo, hi), oracle)
        runs.append(cellcycle_evolve(model, u0, model.age_grid.width, T, record_every=10))

    for run in runs:
        fit = malthus_estimate(run.times, run.totals, window=(30.0, T))
        assert fit.lambda_hat == pytest.approx(oracle, abs=1e-2)
        assert fit.lambda_hat == pytest.approx(RENEWAL_SANITY_RATE, rel=0.1)
        rates = window_rates(run, [(20.0, 40.0), (40.0, T)])
        assert abs(rates[1] - rates[0]) < 1e-3
        # residual peaks over one cycle length, every 5 time units after burn-in
        residual = aeg_residual(run, fit.lambda_hat)
        peaks = [
            residual[(run.profile_times >= t) & (run.profile_times < t + 1.2)].max()
            for t in np.arange(5.0, 35.0, 5.0)
        ]
        assert len(peaks) == 6
        assert np.all(np.diff(peaks) < 0)

    first, second = (run.final / run.final.sum() for run in runs)
    assert np.abs(first - second).sum() < 0.02
