from __future__ import annotations

import numpy as np
import pytest

from kalman_adapt.core.optimization_limits import RegressionDataset


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def random_spd(rng):
    """Factory for random symmetric positive-definite matrices with λ_min ≥ `floor`."""

    def make(dim: int, floor: float = 0.1) -> np.ndarray:
        root = rng.standard_normal((dim, dim))
        return root @ root.T / dim + floor * np.eye(dim)

    return make


@pytest.fixture
def regression(rng):
    """Factory for Gaussian-regressor datasets y = φᵀx* + ε carrying their truth."""

    def make(n: int, dim: int, noise_var: float = 0.25) -> RegressionDataset:
        truth = rng.standard_normal(dim)
        phi = rng.standard_normal((n, dim))
        y = phi @ truth + np.sqrt(noise_var) * rng.standard_normal(n)
        return RegressionDataset(phi, y, noise_var, truth=truth)

    return make
