import numpy as np
import pytest
from numpy.testing import assert_allclose

from kalman_adapt.core.belief import GaussianBelief, to_information
from kalman_adapt.core.linear_filter import (
    Observation,
    StateSpaceModel,
    run_filter,
    run_information_filter,
    update,
)
from kalman_adapt.core.observability import (
    check_boundedness,
    check_contraction,
    check_information_accumulation,
    gain_annealing,
    gramian,
    log_linear_fit,
    mse_vs_trace,
    probe_boundedness,
    window_gramians,
)
from kalman_adapt.exceptions import LengthMismatch, WindowTooShort


def _stream(rng, n, d, noise_var=1.0):
    return [Observation(rng.standard_normal(d), noise_var, rng.standard_normal()) for _ in range(n)]


def test_gramian_of_repeated_scalar():
    observations = [Observation([1.0], 1.0, 0.0)] * 3
    report = gramian(StateSpaceModel.random_walk(1), observations, 0, 3)
    assert_allclose(report.gramian, [[3.0]])
    assert report.min_eigenvalue == pytest.approx(3.0)
    assert report.rank == 1


def test_gramian_of_unobserved_direction():
    observations = [Observation([1.0, 0.0], 1.0, 0.0)] * 4
    report = gramian(StateSpaceModel.random_walk(2), observations)
    assert report.window_length == 4
    assert report.rank == 1
    assert report.min_eigenvalue == pytest.approx(0.0)


def test_gramian_propagates_transition():
    model = StateSpaceModel([[2.0]], [[0.0]])
    observations = [Observation([1.0], 1.0, 0.0)] * 2
    # 1 + 2·2
    assert_allclose(gramian(model, observations).gramian, [[5.0]])


def test_gramian_splits_across_adjacent_windows(rng):
    rotation = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    model = StateSpaceModel(0.9 * rotation, np.zeros((3, 3)))
    observations = _stream(rng, 7, 3)
    transport = np.linalg.matrix_power(model.transition, 3)
    head, tail = gramian(model, observations, 0, 3), gramian(model, observations, 3, 4)
    split = head.gramian + transport.T @ tail.gramian @ transport
    assert_allclose(split, gramian(model, observations, 0, 7).gramian, rtol=1e-10, atol=1e-12)


def test_gramian_window_too_long(rng):
    with pytest.raises(WindowTooShort):
        gramian(StateSpaceModel.random_walk(2), _stream(rng, 3, 2), 1, 3)


def test_window_gramians_are_consecutive(rng):
    reports = window_gramians(StateSpaceModel.random_walk(2), _stream(rng, 10, 2), 3)
    assert [r.window_start for r in reports] == [0, 3, 6]


def test_information_accumulation_on_static_run(rng):
    model = StateSpaceModel.random_walk(3)
    observations = _stream(rng, 30, 3, 0.5)
    trace = run_filter(model, GaussianBelief.isotropic(3, 10.0), observations)
    report = check_information_accumulation(trace, window_gramians(model, observations, 5))
    assert report.passed
    assert len(report.windows) == 6
    assert report.max_residual < 1e-6


def test_information_accumulation_accepts_precision_beliefs(rng):
    model = StateSpaceModel.random_walk(2)
    observations = _stream(rng, 12, 2)
    init = to_information(GaussianBelief.isotropic(2, 1.0))
    series = [init] + run_information_filter(model, init, observations)
    report = check_information_accumulation(series, window_gramians(model, observations, 4))
    assert report.passed
    assert report.max_residual < 1e-10


def test_information_accumulation_window_past_trace(rng):
    model = StateSpaceModel.random_walk(2)
    observations = _stream(rng, 10, 2)
    trace = run_filter(model, GaussianBelief.isotropic(2, 1.0), observations[:4])
    with pytest.raises(WindowTooShort):
        check_information_accumulation(trace, window_gramians(model, observations, 5))


def test_contraction_of_static_run(rng):
    model = StateSpaceModel.random_walk(3)
    trace = run_filter(model, GaussianBelief.isotropic(3, 10.0), _stream(rng, 60, 3, 0.25))
    report = check_contraction(trace, 5, model)
    assert report.loewner_checked
    assert report.loewner_violations == []
    assert report.contracting
    assert report.precision_nondecreasing
    assert report.passed
    assert len(report.trace_series) == 60


def test_contraction_skips_loewner_with_process_noise(rng):
    model = StateSpaceModel.random_walk(2, 0.01)
    trace = run_filter(model, GaussianBelief.isotropic(2, 1.0), _stream(rng, 30, 2))
    assert not check_contraction(trace, 5, model).loewner_checked


def test_contraction_needs_three_windows(rng):
    trace = run_filter(StateSpaceModel.random_walk(2), GaussianBelief.isotropic(2, 1.0), _stream(rng, 14, 2))
    with pytest.raises(WindowTooShort):
        check_contraction(trace, 5)


def test_unobserved_stream_does_not_contract():
    observations = [Observation([0.0, 0.0], 1.0, 0.0)] * 9
    trace = run_filter(StateSpaceModel.random_walk(2), GaussianBelief.isotropic(2, 1.0), observations)
    report = check_contraction(trace, 3)
    assert report.fitted_rate == pytest.approx(1.0, abs=1e-9)
    assert report.fit_constant == pytest.approx(1.0)


def test_collapsed_covariance_has_zero_rate():
    model = StateSpaceModel([[0.0]], [[0.0]])
    trace = run_filter(model, GaussianBelief([0.0], [[1.0]]), [Observation(1.0, 1.0, 0.0)] * 9)
    report = check_contraction(trace, 3, model)
    assert np.all(np.isfinite(report.trace_series))
    assert report.fitted_rate == 0.0
    assert report.fit_constant == 0.0
    assert not report.loewner_checked


def test_log_linear_fit_drops_zeros():
    slope, intercept = log_linear_fit([0, 1, 2, 3, 4], [4.0, 2.0, 1.0, 0.0, 0.0])
    assert slope == pytest.approx(np.log(0.5))
    assert intercept == pytest.approx(np.log(4.0))
    assert log_linear_fit([0, 1, 2], [1.0, 0.0, 0.0]) == (-np.inf, -np.inf)


def test_boundedness_under_process_noise(rng):
    model = StateSpaceModel.random_walk(2, 0.01)
    report = probe_boundedness(model, GaussianBelief.isotropic(2, 1.0), _stream(rng, 2000, 2))
    assert report.bounded
    assert report.converged
    assert report.max_difference < 1e-6
    assert report.passed
    assert report.sup_norm >= report.norm_series[-1]


def test_boundedness_length_mismatch(rng):
    model = StateSpaceModel.random_walk(2, 0.01)
    observations = _stream(rng, 10, 2)
    trace = run_filter(model, GaussianBelief.isotropic(2, 1.0), observations)
    with pytest.raises(LengthMismatch):
        check_boundedness(trace, trace[:5])


def test_unobserved_random_walk_grows():
    model = StateSpaceModel.random_walk(1, 1.0)
    observations = [Observation([0.0], 1.0, 0.0)] * 20
    report = check_boundedness(run_filter(model, GaussianBelief.isotropic(1, 1.0), observations))
    assert not report.bounded


def test_mse_envelope_single_step():
    step = update(GaussianBelief([0.0], [[1.0]]), Observation([1.0], 1.0, 2.0))
    report = mse_vs_trace([step], [0.0])
    assert_allclose(report.mse, [1.0])
    assert_allclose(report.mean_trace, [0.5])
    assert_allclose(report.bound, [0.55])
    assert not report.passed
    assert report.worst_ratio == pytest.approx(1.0 / 0.55)

    assert mse_vs_trace([step], [1.0]).passed
    assert_allclose(mse_vs_trace([step], [0.0], q=0.5).bound, [1.1])


def test_mse_replicate_lengths_must_agree(rng):
    model = StateSpaceModel.random_walk(2)
    init = GaussianBelief.isotropic(2, 1.0)
    runs = [run_filter(model, init, _stream(rng, n, 2)) for n in (5, 6)]
    with pytest.raises(LengthMismatch):
        mse_vs_trace(runs, [np.zeros(2), np.zeros(2)])


def test_gain_anneals_on_static_scalar_stream():
    observations = [Observation([1.0], 1.0, 0.5)] * 10
    trace = run_filter(StateSpaceModel.random_walk(1), GaussianBelief.isotropic(1, 4.0), observations)
    report = gain_annealing(trace)
    assert report.annealed
    assert report.gain_dropped(0)
    assert report.gain_norms[0] == pytest.approx(0.8)
    assert np.all(np.diff(report.gain_norms) < 0)
