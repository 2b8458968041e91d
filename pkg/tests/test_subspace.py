import numpy as np
import pytest
from numpy.testing import assert_allclose

from kalman_adapt.adaptation.subspace import (
    AdaptationSubspace,
    ekf_adapt,
    generate_task,
    linearize_token,
    prompt_gramian,
)
from kalman_adapt.adaptation.toy_model import ToyTokenModel
from kalman_adapt.core.belief import GaussianBelief
from kalman_adapt.core.linear_filter import StateSpaceModel
from kalman_adapt.exceptions import DimensionMismatch


@pytest.fixture(scope='module')
def model():
    return ToyTokenModel(seed=0)


@pytest.fixture
def subspace(model, rng):
    return AdaptationSubspace.random(model.base_params, 2, rng)


def test_random_subspace_columns(subspace):
    b = subspace.embedding
    assert b.shape == (64, 2)
    assert_allclose(b.T @ b, 64 * np.eye(2), atol=1e-9)
    assert subspace.min_singular_value == pytest.approx(8.0)


def test_random_subspace_avoids_direction(model, rng):
    avoid = rng.standard_normal(model.param_dim)
    subspace = AdaptationSubspace.random(model.base_params, 2, rng, column_norm=1.0, orthogonal_to=avoid)
    assert_allclose(subspace.embedding.T @ avoid, np.zeros(2), atol=1e-10)
    assert_allclose(np.linalg.norm(subspace.embedding, axis=0), [1.0, 1.0])


def test_params_are_affine(subspace):
    state = np.array([0.5, -1.0])
    assert_allclose(subspace.params(state), subspace.base_params + subspace.embedding @ state)
    assert_allclose(subspace.params(np.zeros(2)), subspace.base_params)


@pytest.mark.parametrize('embedding', [
    np.zeros((64, 2)),
    np.ones((64, 2)),
    np.eye(64),
    np.ones((10, 2)),
])
def test_invalid_subspaces(model, embedding):
    with pytest.raises(DimensionMismatch):
        AdaptationSubspace(model.base_params, embedding)


def test_generate_task(model, subspace, rng):
    task = generate_task(model, subspace, rng, num_demo=12, num_heldout=20, shift=2.0)
    assert len(task.demonstration) == 12
    assert len(task.heldout_targets) == len(task.heldout_contexts) == 20
    assert np.linalg.norm(task.true_state) == pytest.approx(2.0)
    assert_allclose(task.true_params, subspace.params(task.true_state))

    unshifted = generate_task(model, subspace, rng, num_demo=4, num_heldout=4, direction=np.zeros(2))
    assert_allclose(unshifted.true_state, np.zeros(2))


def test_token_observation_innovation_is_noise_var(model, subspace):
    mean = np.array([0.3, -0.2])
    obs = linearize_token(model, subspace, mean, [1, 2], 3, noise_var=0.5)
    expected = model.token_gradient(subspace.params(mean), [1, 2], 3) @ subspace.embedding
    assert_allclose(obs.operator, expected)
    assert obs.value - obs.operator @ mean == pytest.approx(-0.5)
    assert obs.raw_nll == pytest.approx(model.token_nll(model.base_params, [1, 2], 3))
    assert obs.nll == pytest.approx(model.token_nll(subspace.params(mean), [1, 2], 3))


def test_fixed_linearization_point(model, subspace):
    obs = linearize_token(model, subspace, np.array([1.0, 1.0]), [4], 2, noise_var=1.0, relinearize=False)
    expected = model.token_gradient(model.base_params, [4], 2) @ subspace.embedding
    assert_allclose(obs.operator, expected)
    assert obs.nll == pytest.approx(obs.raw_nll)


def test_adaptation_leaves_frozen_model_untouched(model, subspace, rng):
    task = generate_task(model, subspace, rng, num_demo=16, num_heldout=16)
    before = model.base_params.tobytes(), model.embeddings.tobytes(), subspace.base_params.tobytes()
    result = ekf_adapt(
        model, subspace, GaussianBelief.isotropic(2, 1.0), task.demonstration,
        heldout=(task.heldout_contexts, task.heldout_targets),
    )
    after = model.base_params.tobytes(), model.embeddings.tobytes(), subspace.base_params.tobytes()
    assert before == after
    assert len(result.steps) == len(result.token_observations) == 16
    assert len(result.heldout_nll) == 16
    assert np.all(np.diff(result.trace_series) <= 1e-12)
    assert result.state_errors(task.true_state).shape == (16,)
    assert result.improvement == pytest.approx(result.baseline_nll - result.final_nll)


def test_zero_subspace_cannot_adapt(model, rng):
    subspace = AdaptationSubspace(model.base_params, np.zeros((64, 2)), check_rank=False)
    tokens = model.sample(model.base_params, 10, rng)
    contexts = [tokens[:t] for t in range(len(tokens))]
    result = ekf_adapt(model, subspace, GaussianBelief.isotropic(2, 1.0), tokens, heldout=(contexts, tokens))
    assert_allclose(result.final_mean, np.zeros(2))
    assert_allclose(result.trace_series, np.full(10, 2.0))
    assert result.improvement == 0.0


def test_diagonal_adaptation_keeps_diagonal_covariance(model, subspace, rng):
    tokens = model.sample(model.base_params, 8, rng)
    result = ekf_adapt(model, subspace, GaussianBelief.isotropic(2, 1.0), tokens, diagonal=True)
    for step in result.steps:
        covariance = step.posterior.covariance
        assert covariance[0, 1] == 0.0
    assert len(result.heldout_nll) == 0
    assert np.isnan(result.final_nll)


def test_prior_dimension_must_match(model, subspace):
    with pytest.raises(DimensionMismatch):
        ekf_adapt(model, subspace, GaussianBelief.isotropic(3, 1.0), [1, 2, 3])


def test_prompt_gramian(model, subspace, rng):
    tokens = model.sample(model.base_params, 6, rng)
    result = ekf_adapt(model, subspace, GaussianBelief.isotropic(2, 1.0), tokens, noise_var=2.0)
    report = prompt_gramian(result.token_observations, StateSpaceModel.random_walk(2))
    expected = sum(np.outer(o.operator, o.operator) / 2.0 for o in result.token_observations)
    assert_allclose(report.gramian, expected)
    assert report.window_length == 6


def test_repeated_token_gives_rank_one_gramian(model, subspace):
    mean = np.array([0.2, 0.1])
    observations = [linearize_token(model, subspace, mean, [5, 5], 5, noise_var=1.0)] * 6
    report = prompt_gramian(observations, StateSpaceModel.random_walk(2))
    assert report.rank == 1
    assert report.min_eigenvalue == pytest.approx(0.0, abs=1e-10)


def test_relinearizing_moves_the_operator(model, subspace):
    first = linearize_token(model, subspace, np.zeros(2), [1, 2], 3, noise_var=1.0)
    second = linearize_token(model, subspace, np.array([1.5, -1.0]), [1, 2], 3, noise_var=1.0)
    assert not np.allclose(first.operator, second.operator)
    fixed = linearize_token(model, subspace, np.array([1.5, -1.0]), [1, 2], 3, noise_var=1.0, relinearize=False)
    assert_allclose(fixed.operator, first.operator)
