import numpy as np
import pytest
from numpy.testing import assert_allclose

from kalman_adapt.core.belief import (
    GaussianBelief,
    PrecisionBelief,
    from_information,
    symmetrize_and_floor,
    to_information,
)
from kalman_adapt.exceptions import DimensionMismatch, NonPositiveDefinite


def test_identity_covariance_to_information():
    info = to_information(GaussianBelief([0.0, 0.0], np.eye(2)))
    assert_allclose(info.information_matrix, np.eye(2))
    assert_allclose(info.information_vector, [0.0, 0.0])


def test_scalar_reciprocal():
    info = to_information(GaussianBelief([1.0], [[4.0]]))
    assert_allclose(info.information_matrix, [[0.25]])
    assert_allclose(info.information_vector, [0.25])

    back = from_information(PrecisionBelief([[0.25]], [0.25]))
    assert_allclose(back.mean, [1.0])
    assert_allclose(back.covariance, [[4.0]])


def test_precision_times_covariance_is_identity(random_spd, rng):
    covariance = random_spd(5)
    info = to_information(GaussianBelief(rng.standard_normal(5), covariance))
    assert_allclose(info.information_matrix @ covariance, np.eye(5), atol=1e-8)


def test_round_trip(random_spd, rng):
    for _ in range(50):
        belief = GaussianBelief(rng.standard_normal(4), random_spd(4))
        back = from_information(to_information(belief))
        assert_allclose(back.mean, belief.mean, rtol=1e-8, atol=1e-12)
        assert_allclose(back.covariance, belief.covariance, rtol=1e-8, atol=1e-12)


def test_symmetrize_and_floor_examples():
    assert_allclose(symmetrize_and_floor(np.eye(3)), np.eye(3))
    assert_allclose(
        symmetrize_and_floor([[1.0, 1e-12], [0.0, 1.0]]),
        [[1.0, 5e-13], [5e-13, 1.0]],
    )


def test_symmetrize_and_floor_clamps_negative_eigenvalue(rng):
    q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    matrix = q @ np.diag([-1e-9, 1.0, 2.0]) @ q.T
    repaired = symmetrize_and_floor(matrix, 1e-12)
    eigenvalues = np.linalg.eigvalsh(repaired)
    assert eigenvalues[0] == pytest.approx(1e-12, abs=1e-14)
    assert_allclose(eigenvalues[1:], [1.0, 2.0])


def test_symmetrize_and_floor_is_idempotent(random_spd):
    once = symmetrize_and_floor(random_spd(4) - 0.5 * np.eye(4), 1e-3)
    assert_allclose(symmetrize_and_floor(once, 1e-3), once, atol=1e-12)


def test_beliefs_are_read_only():
    belief = GaussianBelief([1.0, 2.0], np.eye(2))
    with pytest.raises(ValueError):
        belief.mean[0] = 5.0
    with pytest.raises(ValueError):
        belief.covariance[0, 0] = 5.0


def test_cached_summaries():
    belief = GaussianBelief([0.0, 0.0], np.diag([4.0, 1.0]))
    assert belief.trace == pytest.approx(5.0)
    assert belief.spectral_norm == pytest.approx(4.0)
    assert belief.min_eigenvalue == pytest.approx(1.0)
    assert belief.precision_min_eigenvalue == pytest.approx(0.25)
    assert GaussianBelief.isotropic(3, 2.0).trace == pytest.approx(6.0)
    assert GaussianBelief([0.0], [[0.0]]).precision_min_eigenvalue == np.inf


@pytest.mark.parametrize('mean, covariance, error', [
    ([0.0, 0.0], np.eye(3), DimensionMismatch),
    ([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]], NonPositiveDefinite),
])
def test_invalid_beliefs(mean, covariance, error):
    with pytest.raises(error):
        GaussianBelief(mean, covariance)


def test_indefinite_covariance_fails_at_factorization():
    belief = GaussianBelief([0.0, 0.0], np.diag([1.0, -1.0]))
    with pytest.raises(NonPositiveDefinite):
        to_information(belief)
