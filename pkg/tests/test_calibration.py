import numpy as np
import pytest

from kalman_adapt.core.belief import GaussianBelief
from kalman_adapt.core.linear_filter import Observation, StateSpaceModel, run_filter
from kalman_adapt.core.optimization_limits import RegressionDataset
from kalman_adapt.exceptions import DimensionMismatch, InsufficientData
from kalman_adapt.experiments.calibration import PredictiveEvents, compute_calibration


def _events(realized):
    n = len(realized)
    return PredictiveEvents(np.zeros(n), np.ones(n), np.asarray(realized, dtype=float))


def test_too_few_events():
    with pytest.raises(InsufficientData):
        compute_calibration([_events(np.zeros(49))])


def test_exact_coverage():
    # |z| = 0.1 lies inside both intervals, |z| = 1.0 only inside the 90% one, |z| = 3 inside neither
    realized = [0.1] * 30 + [1.0] * 20 + [-3.0] * 50
    report = compute_calibration([_events(realized)])
    assert report.num_trials == 100
    assert report.coverage(0.5) == pytest.approx(0.3)
    assert report.coverage(0.9) == pytest.approx(0.5)
    assert report.as_dict()['nominal_levels'] == [0.5, 0.9]


def test_events_from_filter_steps():
    steps = run_filter(
        StateSpaceModel.random_walk(1),
        GaussianBelief([0.0], [[1.0]]),
        [Observation([1.0], 1.0, 2.0), Observation([1.0], 1.0, 0.0)],
    )
    events = PredictiveEvents.from_filter_steps(steps)
    np.testing.assert_allclose(events.means, [0.0, 1.0])
    np.testing.assert_allclose(events.variances, [2.0, 1.5])
    np.testing.assert_allclose(events.realized, [2.0, 0.0])


def test_vector_observations_rejected():
    steps = run_filter(
        StateSpaceModel.random_walk(2),
        GaussianBelief.isotropic(2, 1.0),
        [Observation(np.eye(2), np.eye(2), [0.0, 0.0])],
    )
    with pytest.raises(DimensionMismatch):
        PredictiveEvents.from_filter_steps(steps)


def test_well_specified_filter_is_calibrated(rng):
    traces = []
    for _ in range(40):
        truth = np.sqrt(2.0) * rng.standard_normal(3)
        phi = rng.standard_normal((50, 3))
        data = RegressionDataset(phi, phi @ truth + 0.5 * rng.standard_normal(50), 0.25)
        traces.append(run_filter(StateSpaceModel.random_walk(3), GaussianBelief.isotropic(3, 2.0), data.observations))
    report = compute_calibration(traces)
    assert report.num_trials == 2000
    assert abs(report.coverage(0.5) - 0.5) <= 0.05
    assert abs(report.coverage(0.9) - 0.9) <= 0.05
