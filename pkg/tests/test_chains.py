import numpy as np
import pytest

from src.semilab.chains import (
    BirthDeathSpec,
    birth_death_stationary,
    closed_classes,
    dyson_phillips,
    evolve,
    explosivity_check,
    foguel_profile,
    intensity_from_birth_death,
    jc_distance,
    jc_distance_from_sequences,
    jc_intensity,
    jc_transition,
    poisson_truncation,
    stationary,
    transition_matrix,
    truncated_poisson,
    uniformize,
    validate_intensity,
)
from src.semilab.errors import (
    AbsorbingBoundaryError,
    DomainError,
    ReducibleChainError,
    SaturationError,
    ShapeError,
    ValidationError,
)


def test_validate_intensity_reports_first_violation():
    with pytest.raises(ShapeError):
        validate_intensity([[0.0, 0.0]])
    with pytest.raises(ValidationError) as info:
        validate_intensity([[1.0, -1.0], [0.0, 0.0]])
    assert info.value.payload["row"] == 0
    with pytest.raises(ValidationError) as info:
        validate_intensity([[-1.0, 1.0], [1.0, -0.5]])
    assert info.value.payload["row"] == 1


def test_uniformize_is_stochastic(random_intensity):
    Q = validate_intensity(random_intensity(5))
    chain = uniformize(Q)
    np.testing.assert_allclose(chain.jump_matrix.sum(axis=1), 1.0, atol=1e-14)
    with pytest.raises(DomainError):
        uniformize(Q, lam=0.01)


def test_poisson_truncation_bound():
    K = poisson_truncation(10.0, 1e-12)
    assert K > 10
    assert poisson_truncation(0.0, 1e-12) == 0


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_jukes_cantor_closed_form(t):
    Q = jc_intensity(0.3)
    P = transition_matrix(Q, t)
    np.testing.assert_allclose(P, jc_transition(0.3, t), atol=1e-10)
    x = evolve(Q, t, [1.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(x, jc_transition(0.3, t)[0], atol=1e-10)


def test_evolve_rejects_bad_input():
    Q = jc_intensity(1.0)
    with pytest.raises(DomainError):
        evolve(Q, 1.0, [0.5, 0.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        evolve(Q, -1.0, [1.0, 0.0, 0.0, 0.0])
    with pytest.raises(ShapeError):
        evolve(Q, 1.0, [1.0, 0.0])


def test_jc_distance():
    assert jc_distance(0.3) == pytest.approx(0.383119, abs=1e-6)
    assert jc_distance(0.3, pairwise=True) == pytest.approx(0.383119 / 2, abs=1e-6)
    assert jc_distance(0.0) == 0.0
    with pytest.raises(SaturationError):
        jc_distance(0.75)
    with pytest.raises(DomainError):
        jc_distance(-0.1)


def test_jc_distance_from_sequences():
    d = jc_distance_from_sequences("ACGTACGTAC", "ACGTACGTTT")
    assert d == pytest.approx(jc_distance(0.2) / 2)
    with pytest.raises(ShapeError):
        jc_distance_from_sequences("ACG", "AC")


def test_erythrocyte_stationary_is_truncated_poisson():
    spec = BirthDeathSpec.erythrocyte(5.0, 1.0, 100)
    Q = intensity_from_birth_death(spec)
    oracle = truncated_poisson(5.0, 100)
    assert np.abs(stationary(Q) - oracle).sum() < 1e-8
    assert np.abs(birth_death_stationary(spec) - oracle).sum() < 1e-12
    x0 = np.zeros(101)
    x0[0] = 1.0
    assert np.abs(evolve(Q, 20.0, x0) - oracle).sum() < 1e-4


def test_reducible_chain_returns_one_law_per_class():
    Q = validate_intensity([
        [-1.0, 1.0, 0.0, 0.0],
        [1.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, -2.0, 2.0],
        [0.0, 0.0, 1.0, -1.0],
    ])
    assert len(closed_classes(Q)) == 2
    with pytest.raises(ReducibleChainError) as info:
        stationary(Q)
    solutions = info.value.payload["solutions"]
    assert len(solutions) == 2
    np.testing.assert_allclose(sorted(map(tuple, solutions)), [(0, 0, 1 / 3, 2 / 3), (0.5, 0.5, 0, 0)])


def test_transient_states_get_no_mass():
    Q = validate_intensity([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [0.0, 1.0, -1.0]])
    np.testing.assert_allclose(stationary(Q), [0.0, 0.5, 0.5])


def test_explosivity_verdicts():
    assert explosivity_check(BirthDeathSpec.erythrocyte(5.0, 1.0)).verdict == "non_explosive"
    assert explosivity_check(BirthDeathSpec.pure_birth("geometric")).verdict == "explosive"
    assert explosivity_check(BirthDeathSpec.pure_birth("constant")).verdict == "non_explosive"
    with pytest.raises(AbsorbingBoundaryError):
        explosivity_check(BirthDeathSpec(lambda i: 1.0 if i < 3 else 0.0, lambda i: 0.0))


def test_dyson_phillips_matches_full_generator(random_intensity):
    rng = np.random.default_rng(11)
    A0 = validate_intensity(random_intensity(4, seed=3))
    K = rng.uniform(size=(4, 4))
    K /= K.sum(axis=1, keepdims=True)
    f = np.array([0.1, 0.2, 0.3, 0.4])
    series, tail = dyson_phillips(A0, K, 1.0, 1.0, f, 60)
    full = validate_intensity(A0.q + K - np.eye(4))
    assert tail < 1e-12
    np.testing.assert_allclose(series, evolve(full, 1.0, f), atol=1e-8)


def test_foguel_profile_is_monotone_for_absorbing_window():
    Q = validate_intensity([[-1.0, 1.0], [0.0, 0.0]])
    profile = foguel_profile(Q, [1.0, 0.0], [0.0, 1.0, 2.0], window=[0])
    np.testing.assert_allclose(profile, np.exp(-np.array([0.0, 1.0, 2.0])), atol=1e-10)
