import math

import numpy as np
import pytest
from scipy import stats

from src.semilab.density import Grid1D, GridDensity, ProductDensity, histogram_from_samples, l1_distance
from src.semilab.errors import (
    BoundViolationError,
    DomainError,
    RegionViolationError,
    ShapeError,
    StallError,
    StepSizeError,
)
from src.semilab.numerics import FlowField, RandomStream
from src.semilab.pdmp import (
    HybridState,
    SemiMarkovKangaroo,
    SwitchingModel,
    Window,
    active_duration_cdf,
    additive_boost,
    catastrophe_simulate,
    gene_1d_model,
    gene_2d_model,
    immune_status_simulate,
    kac_pde_solve,
    kangaroo_simulate,
    next_jump_time,
    occupancy_profile,
    run_ensemble,
    semi_markov_simulate,
    simulate_gene,
    simulate_switching,
    simulate_threshold_gene,
    telegraph_ensemble,
    telegraph_simulate,
    vesicle_preset,
)


def _stay(x, stream):
    return x


# switching

def test_bound_is_checked_over_region():
    with pytest.raises(BoundViolationError):
        gene_1d_model(q01=5.0, Lambda=1.0)


def test_thinning_law_matches_constant_rate():
    model = gene_1d_model()
    stream = RandomStream(1)
    taus = [
        next_jump_time(model.flows[0], lambda x: 2.0, HybridState(x=np.array([0.5])), stream, Lambda=3.0)
        for _ in range(5000)
    ]
    assert stats.kstest(taus, stats.expon(scale=0.5).cdf).statistic < 0.025


def test_switching_path_stays_in_invariant_interval(stream):
    path = simulate_gene("1d", {}, stream, 200.0)
    assert path.times[0] == 0.0 and path.horizon == pytest.approx(200.0)
    assert np.all(path.positions >= -1e-9) and np.all(path.positions <= 1.0 + 1e-9)
    assert set(np.unique(path.regimes)) == {0, 1}
    assert path.occupation_fraction(0) + path.occupation_fraction(1) == pytest.approx(1.0)


def test_trajectory_frame_and_state_lookup(stream):
    path = simulate_gene("2d", {}, stream, 20.0)
    frame = path.to_frame()
    assert list(frame.columns) == ["t", "x0", "x1", "regime"]
    state = path.state_at(path.times[1])
    np.testing.assert_allclose(state.x, path.positions[1])
    with pytest.raises(DomainError):
        path.state_at(21.0)


def test_restrict_preserves_window_states(stream):
    path = simulate_gene("1d", {}, stream, 50.0)
    part = path.restrict(10.0, 30.0)
    assert part.horizon == pytest.approx(20.0)
    for t in (0.0, 5.5, 19.0):
        np.testing.assert_allclose(part.state_at(t).x, path.state_at(10.0 + t).x, atol=1e-12)


def test_random_switching_occupation_is_balanced():
    path = simulate_gene("1d", {"q01": 1.0, "q10": 1.0}, RandomStream(8), 5000.0)
    assert path.occupation_fraction(1) == pytest.approx(0.5, abs=0.03)
    assert path.time_average() == pytest.approx(0.5, abs=0.03)


@pytest.mark.slow
def test_occupancy_histograms_are_stationary_across_windows():
    T = 1e5
    path = simulate_gene("1d", {}, RandomStream(12), T)
    grid = Grid1D(lo=0.0, hi=1.0, n_cells=10)
    early = path.restrict(0.5 * T, 0.75 * T).occupation_histogram(grid, samples_per_segment=4)
    late = path.restrict(0.75 * T, T).occupation_histogram(grid, samples_per_segment=4)
    assert l1_distance(early, late) < 0.05


# thresholds

def test_threshold_inactive_durations_follow_decay():
    theta, mu = 0.4, 1.0
    path = simulate_threshold_gene("1d", {"P": 1.0, "mu": mu}, theta, RandomStream(4), 300.0)
    checked = 0
    for n in range(1, len(path.times) - 2):
        if path.regimes[n] == 0 and path.regimes[n + 1] == 1:
            duration = path.times[n + 1] - path.times[n]
            assert duration == pytest.approx(math.log(path.positions[n, 0] / theta) / mu, abs=1e-8)
            assert path.positions[n + 1, 0] == pytest.approx(theta, abs=1e-8)
            checked += 1
    assert checked > 50


def test_active_duration_cdf_closed_form():
    x0 = 0.4
    for t in (0.1, 1.0, 3.0):
        exposure = 2.0 * t + 2.0 * (x0 - 1.0) * (1.0 - math.exp(-t))
        assert active_duration_cdf(lambda y: 2.0 * y, x0, t) == pytest.approx(1.0 - math.exp(-exposure), abs=1e-10)


@pytest.mark.slow
def test_threshold_active_durations_pass_kolmogorov_test():
    theta = 0.4
    path = simulate_threshold_gene("1d", {}, theta, RandomStream(6), 200_000.0, q10=lambda x: 2.0 * x[-1])
    durations = path.sojourns(1)
    assert len(durations) >= 100_000

    def cdf(t):
        t = np.asarray(t)
        return 1.0 - np.exp(-(2.0 * t + 2.0 * (theta - 1.0) * (1.0 - np.exp(-t))))

    assert stats.kstest(durations, cdf).statistic < 0.01


def test_two_dimensional_threshold_gene_stays_in_rectangle():
    model = gene_2d_model()
    lo, hi = model.region
    path = simulate_threshold_gene("2d", {}, 0.3, RandomStream(10), 500.0)
    assert path.n_jumps > 20
    assert np.all(path.positions >= lo - 1e-9) and np.all(path.positions <= hi + 1e-9)
    for t in np.linspace(0.0, 500.0, 400):
        x = path.state_at(t).x
        assert np.all(x >= lo - 1e-9) and np.all(x <= hi + 1e-9)


def test_threshold_above_equilibrium_stalls():
    with pytest.raises(StallError):
        simulate_threshold_gene("1d", {}, 1.5, RandomStream(0), 10.0)
    with pytest.raises(DomainError):
        simulate_threshold_gene("4d", {}, 0.5, RandomStream(0), 10.0)


# jump processes

def test_exponential_holding_reproduces_markov_kangaroo():
    jump = lambda x, s: x + 1.0
    semi = SemiMarkovKangaroo(lambda x, a: math.exp(-a), jump, cdf=lambda x, a: 1.0 - math.exp(-a))
    semi_path = semi_markov_simulate(semi, 0.0, 20_000.0, RandomStream(2))
    markov_path = kangaroo_simulate(lambda x: 1.0, jump, 0.0, 20_000.0, RandomStream(3), Lambda=1.0)
    holding = semi_path.holding_times()
    assert stats.kstest(holding, stats.expon().cdf).statistic < 0.015
    assert stats.ks_2samp(holding, markov_path.holding_times()).statistic < 0.025


def test_uniform_holding_hazard_and_age_law():
    semi = SemiMarkovKangaroo(
        lambda x, a: 1.0 if 1.0 <= a <= 2.0 else 0.0,
        _stay,
        cdf=lambda x, a: min(max(a - 1.0, 0.0), 1.0),
        support=lambda x: (1.0, 2.0),
    )
    x = np.array([0.0])
    semi.check_normalization([x])
    for a in np.linspace(1.05, 1.95, 10):
        assert semi.hazard(x, a) == pytest.approx(1.0 / (2.0 - a), abs=1e-8)
    path = semi_markov_simulate(semi, 0.0, 20_000.0, RandomStream(7))
    grid = Grid1D(lo=0.0, hi=2.0, n_cells=20)

    def renewal_age_cdf(a):
        a = np.asarray(a)
        return np.where(a <= 1.0, a, 1.0 + 2.0 * a - 0.5 * a * a - 1.5) / 1.5

    oracle = GridDensity.from_cdf(grid, renewal_age_cdf)
    assert l1_distance(path.age_occupation(grid), oracle) < 0.05


def test_kangaroo_rejects_rate_above_bound():
    with pytest.raises(BoundViolationError):
        kangaroo_simulate(lambda x: 2.0, _stay, 0.0, 1.0, RandomStream(0), Lambda=1.0)


@pytest.mark.parametrize("Lambda", [math.inf, 0.0, -1.0])
def test_kangaroo_needs_finite_rate_bound(Lambda):
    with pytest.raises(DomainError):
        kangaroo_simulate(lambda x: 1.0, _stay, 0.0, 1.0, RandomStream(0), Lambda=Lambda)


def test_catastrophes_arrive_as_poisson_and_growth_is_exponential_between():
    r, psi, T = 0.1, 0.5, 2000.0
    growth = FlowField(1, lambda x: r * np.asarray(x), lambda x0, t: np.asarray(x0) * math.exp(r * t))
    path = catastrophe_simulate(growth, lambda x: psi, lambda x, s: 0.5 * x, 1.0, T, RandomStream(8), Lambda=psi)

    assert abs(path.n_jumps - psi * T) < 4.0 * math.sqrt(psi * T)
    assert stats.kstest(path.holding_times(), stats.expon(scale=1.0 / psi).cdf).statistic < 0.08
    for n in range(1, 50):
        gap = path.times[n] - path.times[n - 1]
        before = path.positions[n - 1, 0] * math.exp(r * gap)
        assert path.positions[n, 0] == pytest.approx(0.5 * before, rel=1e-12)
        middle = path.times[n - 1] + 0.5 * gap
        expected = path.positions[n - 1, 0] * math.exp(0.5 * r * gap)
        assert path.state_at(middle).x[0] == pytest.approx(expected, rel=1e-12)


def _rotation_model(half_height: float) -> SwitchingModel:
    rotation = FlowField(2, lambda x: np.array([-x[1], x[0]]))
    return SwitchingModel([rotation], {}, Lambda=0.0, region=([-1.0, -half_height], [1.0, half_height]), dt=1e-3)


def test_region_is_checked_after_every_flow_step():
    # A full turn ends back inside the box, but the circle leaves it on the way.
    start = HybridState(x=np.array([0.9, 0.0]))
    with pytest.raises(RegionViolationError):
        simulate_switching(_rotation_model(0.5), start, 2.0 * math.pi, RandomStream(0))
    path = simulate_switching(_rotation_model(1.0), start, 2.0 * math.pi, RandomStream(0))
    assert path.positions[-1] == pytest.approx([0.9, 0.0], abs=1e-9)


def test_immune_status_mean_level():
    mu, lam, beta = 1.0, 2.0, 0.5
    path = immune_status_simulate(mu, lam, additive_boost(beta), 1.0, 5000.0, RandomStream(21))
    assert path.time_average() == pytest.approx(lam * beta / mu, rel=0.05)
    assert path.n_jumps == pytest.approx(lam * 5000.0, rel=0.05)


def test_run_ensemble_ignores_thread_count():
    def simulate(child, index):
        return simulate_gene("1d", {}, child, 5.0).n_jumps

    one = run_ensemble(simulate, 30, RandomStream(4), threads=1, chunk=7)
    three = run_ensemble(simulate, 30, RandomStream(4), threads=3, chunk=7)
    assert one == three


def test_occupancy_profile_hits_window():
    paths = run_ensemble(lambda child, i: simulate_gene("1d", {}, child, 10.0), 20, RandomStream(5))
    profile = occupancy_profile(paths, Window([0.4], [0.6]), np.linspace(0.0, 10.0, 21))
    assert profile.hit
    assert 0.0 <= profile.liminf <= 1.0
    assert profile.fractions.shape == (21,)


# velocity jumps

def test_telegraph_exact_sampler_keeps_unit_speed():
    stream = RandomStream(0)
    for _ in range(200):
        x, v = telegraph_simulate(1.0, 0.0, 1, 2.0, stream)
        assert v in (-1, 1)
        assert -2.0 <= x <= 2.0
    with pytest.raises(DomainError):
        telegraph_simulate(1.0, 0.0, 0, 1.0, stream)


def _kac_start(grid: Grid1D, half_width: float) -> ProductDensity:
    start = GridDensity.from_cdf(grid, lambda x: np.clip((x + half_width) / (2.0 * half_width), 0.0, 1.0)).masses
    return ProductDensity(grid, 0.5 * np.column_stack([start, start]), states=[-1, 1])


def test_kac_system_conserves_mass():
    grid = Grid1D(lo=-1.0, hi=1.0, n_cells=200)
    u = kac_pde_solve(1.0, _kac_start(grid, 0.5), 0.005, 3.0)
    assert u.total == pytest.approx(1.0, abs=1e-12)
    assert np.all(u.masses >= 0)
    with pytest.raises(StepSizeError):
        kac_pde_solve(1.0, _kac_start(grid, 0.5), 0.02, 1.0)
    with pytest.raises(ShapeError):
        kac_pde_solve(1.0, ProductDensity(grid, np.full((200, 2), 1 / 400)), 0.005, 1.0)


def test_telegraph_monte_carlo_matches_kac_system():
    fine = Grid1D(lo=-3.0, hi=3.0, n_cells=600)
    coarse = Grid1D(lo=-3.0, hi=3.0, n_cells=60)
    pde = kac_pde_solve(1.0, _kac_start(fine, 0.5), 0.01, 2.0).marginal()
    pde_coarse = GridDensity(coarse, pde.masses.reshape(60, 10).sum(axis=1))

    n = 100_000
    x0 = -0.5 + RandomStream(1).generator.random(n)
    v0 = np.where(np.arange(n) % 2 == 0, 1, -1)
    x_T, v_T = telegraph_ensemble(1.0, x0, v0, 2.0, RandomStream(2))
    assert set(np.unique(v_T)) <= {-1, 1}
    assert l1_distance(histogram_from_samples(x_T, coarse), pde_coarse) < 0.05


def test_telegraph_ensemble_ignores_thread_count():
    x0 = np.zeros(120)
    v0 = np.ones(120, dtype=int)
    one = telegraph_ensemble(1.0, x0, v0, 1.0, RandomStream(3), threads=1, chunk=50)
    four = telegraph_ensemble(1.0, x0, v0, 1.0, RandomStream(3), threads=4, chunk=50)
    np.testing.assert_array_equal(one[0], four[0])


def test_vesicle_capture_statistics():
    rates = [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
    report = vesicle_preset(10.0, 5.0, (4.5, 5.5), math.inf, rates, RandomStream(0), 500)
    assert report.capture_fraction + report.escape_fraction == pytest.approx(1.0)
    assert 0.0 < report.capture_fraction < 1.0
    never_rest = [[0, 0, 1], [1, 0, 1], [1, 0, 0]]
    assert vesicle_preset(10.0, 5.0, (4.5, 5.5), 1.0, never_rest, RandomStream(0), 200).capture_fraction == 0.0
    with pytest.raises(DomainError):
        vesicle_preset(10.0, 12.0, (11.0, 13.0), 1.0, rates, RandomStream(0), 10)
