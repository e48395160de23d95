import numpy as np
import pytest

from src.semilab.numerics import RandomStream


@pytest.fixture
def stream():
    return RandomStream(2025)


@pytest.fixture
def random_intensity():
    """Irreducible intensity matrix with off-diagonal rates in [0.1, 1)."""

    def build(n: int, seed: int = 7) -> np.ndarray:
        rng = np.random.default_rng(seed)
        Q = rng.uniform(0.1, 1.0, size=(n, n))
        np.fill_diagonal(Q, 0.0)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return Q

    return build
