import math

import numpy as np
import pytest

from src.semilab.errors import BracketError, DomainError, IntegrationError
from src.semilab.numerics import (
    FlowField,
    LinearFlowField,
    RandomStream,
    adaptive_quad,
    bisect_root,
    rk4_flow,
    rk4_path,
    sample_categorical,
    sample_exponential,
    sample_poisson_count,
    sample_uniform,
)


def test_rk4_exponential_decay():
    field = FlowField(1, lambda x: -x)
    x = rk4_flow(field, np.array([1.0]), 2.0, 1e-2)
    assert x[0] == pytest.approx(math.exp(-2.0), abs=1e-9)


def test_rk4_zero_time_returns_start():
    x = rk4_flow(lambda x: x, np.array([3.0, 4.0]), 0.0, 0.1)
    np.testing.assert_array_equal(x, [3.0, 4.0])


def test_rk4_rejects_bad_step():
    with pytest.raises(DomainError):
        rk4_flow(lambda x: x, np.array([1.0]), 1.0, 0.0)
    with pytest.raises(DomainError):
        rk4_flow(lambda x: x, np.array([1.0]), -1.0, 0.1)


def test_rk4_blow_up_reports_last_state():
    with pytest.raises(IntegrationError) as info:
        rk4_flow(lambda x: x ** 4, np.array([1.0]), 10.0, 0.1)
    assert np.all(np.isfinite(info.value.payload["last_state"]))


def test_rk4_path_hits_final_time():
    times, states = rk4_path(lambda x: np.ones_like(x), np.array([0.0]), 1.0, 0.3)
    assert times[-1] == pytest.approx(1.0)
    assert states[-1, 0] == pytest.approx(1.0)


def test_linear_flow_is_exact():
    field = LinearFlowField([[0.0, 1.0], [-1.0, 0.0]])
    x = field.flow(np.array([1.0, 0.0]), math.pi / 2)
    np.testing.assert_allclose(x, [0.0, -1.0], atol=1e-12)


def test_adaptive_quad_finite_and_improper():
    assert adaptive_quad(math.sin, 0.0, math.pi).value == pytest.approx(2.0, abs=1e-10)
    assert adaptive_quad(lambda x: math.exp(-x), 0.0, math.inf).value == pytest.approx(1.0, abs=1e-9)


def test_adaptive_quad_endpoint_singular():
    result = adaptive_quad(lambda x: 1.0 / math.sqrt(x * (1.0 - x)), 0.0, 1.0, endpoint_singular=True)
    assert result.value == pytest.approx(math.pi, abs=1e-8)


def test_adaptive_quad_rejects_empty_interval():
    with pytest.raises(DomainError):
        adaptive_quad(math.sin, 1.0, 1.0)


def test_bisect_root():
    assert bisect_root(lambda x: x * x - 2.0, 0.0, 2.0) == pytest.approx(math.sqrt(2.0), abs=1e-11)
    with pytest.raises(BracketError):
        bisect_root(lambda x: x * x + 1.0, -1.0, 1.0)


def test_stream_is_addressed_by_seed_and_path():
    a = sample_uniform(RandomStream(1, (3, 4)), 5)
    b = sample_uniform(RandomStream(1, (3, 4)), 5)
    c = sample_uniform(RandomStream(1, (3, 5)), 5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    np.testing.assert_array_equal(sample_uniform(RandomStream(1, 3).child(4), 5), a)


def test_exponential_mean(stream):
    draws = sample_exponential(stream, 2.0, 200_000)
    assert draws.mean() == pytest.approx(0.5, rel=0.01)
    with pytest.raises(DomainError):
        sample_exponential(stream, 0.0)


def test_categorical_frequencies(stream):
    counts = np.bincount([sample_categorical(stream, np.array([1.0, 0.0, 3.0])) for _ in range(20_000)], minlength=3)
    assert counts[1] == 0
    assert counts[2] / counts.sum() == pytest.approx(0.75, abs=0.02)


def test_poisson_counts_match_mean_and_reject_bad_mean():
    draws = sample_poisson_count(RandomStream(9), 3.5, size=40_000)
    assert draws.mean() == pytest.approx(3.5, rel=0.02)
    assert draws.var() == pytest.approx(3.5, rel=0.05)
    assert sample_poisson_count(RandomStream(9), 0.0) == 0
    with pytest.raises(DomainError):
        sample_poisson_count(RandomStream(9), -1.0)
