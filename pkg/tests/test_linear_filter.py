import numpy as np
import pytest
from numpy.testing import assert_allclose

from kalman_adapt.core.belief import GaussianBelief, from_information, to_information
from kalman_adapt.core.linear_filter import (
    Observation,
    StateSpaceModel,
    diagonal_update,
    predict,
    run_filter,
    run_information_filter,
    update,
)
from kalman_adapt.exceptions import (
    DimensionMismatch,
    NonPositiveDefinite,
    NotDiagonal,
    SingularInnovation,
)


def test_predict_scalar():
    model = StateSpaceModel([[0.5]], [[0.75]])
    prior = predict(model, GaussianBelief([2.0], [[1.0]]))
    assert_allclose(prior.mean, [1.0])
    assert_allclose(prior.covariance, [[1.0]])


def test_predict_identity_without_noise_is_noop(random_spd, rng):
    belief = GaussianBelief(rng.standard_normal(3), random_spd(3))
    prior = predict(StateSpaceModel.random_walk(3), belief)
    assert_allclose(prior.mean, belief.mean)
    assert_allclose(prior.covariance, belief.covariance)


def test_predict_matches_sampled_transition(rng):
    model = StateSpaceModel([[0.9, 0.3], [-0.2, 0.8]], [[0.2, 0.05], [0.05, 0.1]])
    belief = GaussianBelief([1.0, -2.0], [[1.0, 0.4], [0.4, 0.5]])
    n = 200_000
    samples = rng.multivariate_normal(belief.mean, belief.covariance, size=n)
    moved = samples @ model.transition.T + rng.multivariate_normal(np.zeros(2), model.process_noise, size=n)
    prior = predict(model, belief)
    assert_allclose(moved.mean(axis=0), prior.mean, atol=0.02)
    assert_allclose(np.cov(moved, rowvar=False), prior.covariance, atol=0.02)


def test_update_scalar():
    step = update(GaussianBelief([0.0], [[1.0]]), Observation([1.0], 1.0, 2.0))
    assert_allclose(step.gain, [[0.5]])
    assert_allclose(step.posterior.mean, [1.0])
    assert_allclose(step.posterior.covariance, [[0.5]])
    assert_allclose(step.innovation, [2.0])
    assert_allclose(step.innovation_cov, [[2.0]])
    assert_allclose(step.predictive_mean, [0.0])


def test_zero_operator_leaves_belief_unchanged(random_spd, rng):
    belief = GaussianBelief(rng.standard_normal(3), random_spd(3))
    step = update(belief, Observation(np.zeros(3), 1.0, 5.0))
    assert_allclose(step.gain, np.zeros((3, 1)))
    assert_allclose(step.posterior.mean, belief.mean)
    assert_allclose(step.posterior.covariance, belief.covariance)


def test_update_shrinks_covariance(random_spd, rng):
    for _ in range(20):
        belief = GaussianBelief(rng.standard_normal(4), random_spd(4))
        obs = Observation(rng.standard_normal((2, 4)), random_spd(2), rng.standard_normal(2))
        posterior = update(belief, obs).posterior
        assert posterior.trace <= belief.trace + 1e-12
        assert np.linalg.eigvalsh(belief.covariance - posterior.covariance)[0] >= -1e-10
        assert_allclose(posterior.covariance, posterior.covariance.T)


def test_joseph_form_stays_positive_when_ill_conditioned(rng):
    for _ in range(20):
        rotation = np.linalg.qr(rng.standard_normal((4, 4)))[0]
        covariance = (rotation * np.logspace(0, -10, 4)) @ rotation.T
        belief = GaussianBelief(np.zeros(4), (covariance + covariance.T) / 2)
        obs = Observation(rng.standard_normal((2, 4)), np.diag(rng.uniform(0.1, 1.0, 2)), rng.standard_normal(2))
        assert update(belief, obs).posterior.min_eigenvalue > 0


def test_gain_vanishes_as_noise_grows():
    belief = GaussianBelief([0.0], [[1.0]])
    noise = np.logspace(-2, 12, 15)
    gains = np.array([update(belief, Observation(1.0, r, 1.0)).gain[0, 0] for r in noise])
    assert np.all(np.diff(gains) < 0)
    assert gains[-1] < 1e-11
    assert_allclose(gains, 1.0 / (1.0 + noise))


def test_joseph_form_matches_simple_form(random_spd, rng):
    belief = GaussianBelief(rng.standard_normal(4), random_spd(4))
    obs = Observation(rng.standard_normal((2, 4)), random_spd(2), rng.standard_normal(2))
    step = update(belief, obs)
    simple = (np.eye(4) - step.gain @ obs.operator) @ belief.covariance
    assert_allclose(step.posterior.covariance, simple, atol=1e-10)


def test_moment_and_information_forms_agree(random_spd, rng):
    d = 4
    model = StateSpaceModel(0.95 * np.linalg.qr(rng.standard_normal((d, d)))[0], 0.1 * np.eye(d))
    init = GaussianBelief(rng.standard_normal(d), random_spd(d))
    observations = [
        Observation(rng.standard_normal(d), 0.5, rng.standard_normal()) for _ in range(30)
    ]
    steps = run_filter(model, init, observations)
    beliefs = run_information_filter(model, to_information(init), observations)
    assert len(beliefs) == len(steps) == 30
    for step, info in zip(steps, beliefs):
        moment = from_information(info)
        assert_allclose(moment.mean, step.posterior.mean, rtol=1e-7, atol=1e-9)
        assert_allclose(moment.covariance, step.posterior.covariance, rtol=1e-7, atol=1e-9)


def test_static_information_update_is_additive(rng):
    observations = [Observation(rng.standard_normal(3), 0.25, rng.standard_normal()) for _ in range(5)]
    init = to_information(GaussianBelief.isotropic(3, 10.0))
    final = run_information_filter(StateSpaceModel.random_walk(3), init, observations)[-1]
    expected = init.information_matrix + sum(o.information for o in observations)
    assert_allclose(final.information_matrix, expected)


def test_run_filter_indexes_steps(rng):
    observations = [Observation(rng.standard_normal(2), 1.0, 0.0) for _ in range(4)]
    steps = run_filter(StateSpaceModel.random_walk(2, 0.01), GaussianBelief.isotropic(2, 1.0), observations)
    assert [s.index for s in steps] == [0, 1, 2, 3]
    assert steps[1].prior.trace == pytest.approx(steps[0].posterior.trace + 0.02)


def test_run_filter_empty_stream():
    assert run_filter(StateSpaceModel.random_walk(2), GaussianBelief.isotropic(2, 1.0), []) == []


def test_diagonal_update_preserves_single_step_trace(rng):
    belief = GaussianBelief(rng.standard_normal(3), np.diag([1.0, 2.0, 3.0]))
    obs = Observation(rng.standard_normal(3), 0.5, 1.0)
    exact = update(belief, obs).posterior
    diagonal = diagonal_update(belief, obs)
    assert diagonal.trace == pytest.approx(exact.trace)
    assert_allclose(diagonal.mean, exact.mean)
    assert not np.any(diagonal.covariance - np.diag(np.diag(diagonal.covariance)))


def test_diagonal_update_never_reports_less_uncertainty(rng):
    for _ in range(50):
        belief = GaussianBelief(rng.standard_normal(3), np.diag(rng.uniform(0.5, 2.0, 3)))
        obs = Observation(rng.standard_normal(3), float(rng.uniform(0.1, 1.0)), float(rng.standard_normal()))
        assert diagonal_update(belief, obs).trace >= update(belief, obs).posterior.trace - 1e-12


def test_diagonal_update_rejects_full_covariance():
    belief = GaussianBelief([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]])
    with pytest.raises(NotDiagonal):
        diagonal_update(belief, Observation([1.0, 0.0], 1.0, 0.0))


def test_diagonal_run_filter(rng):
    observations = [Observation(rng.standard_normal(3), 1.0, rng.standard_normal()) for _ in range(10)]
    steps = run_filter(StateSpaceModel.random_walk(3), GaussianBelief.isotropic(3, 1.0), observations, diagonal=True)
    for step in steps:
        covariance = step.posterior.covariance
        assert not np.any(covariance - np.diag(np.diag(covariance)))


def test_failing_step_is_reported():
    model = StateSpaceModel([[1.0]], [[0.0]])
    bad = [Observation([1.0], 1.0, 0.0), Observation([1.0, 0.0], 1.0, 0.0)]
    with pytest.raises(DimensionMismatch) as info:
        run_filter(model, GaussianBelief([0.0], [[1.0]]), bad)
    assert info.value.step == 1


def test_indefinite_innovation_raises():
    belief = GaussianBelief([0.0, 0.0], np.diag([1.0, -3.0]))
    with pytest.raises(SingularInnovation):
        update(belief, Observation(np.eye(2), np.eye(2), [0.0, 0.0]))


@pytest.mark.parametrize('operator, noise_cov, value, error', [
    ([1.0, 0.0], 0.0, 1.0, NonPositiveDefinite),
    ([1.0, 0.0], -1.0, 1.0, NonPositiveDefinite),
    (np.eye(2), np.eye(3), [0.0, 0.0], DimensionMismatch),
    (np.eye(2), np.eye(2), [0.0], DimensionMismatch),
])
def test_invalid_observations(operator, noise_cov, value, error):
    with pytest.raises(error):
        Observation(operator, noise_cov, value)


def test_invalid_process_noise():
    with pytest.raises(NonPositiveDefinite):
        StateSpaceModel(np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(DimensionMismatch):
        StateSpaceModel(np.eye(2), np.eye(3))


def test_static_model_flag():
    assert StateSpaceModel.random_walk(3).is_static
    assert not StateSpaceModel.random_walk(3, 0.1).is_static
    assert not StateSpaceModel(0.5 * np.eye(2), np.zeros((2, 2))).is_static
