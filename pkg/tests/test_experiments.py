import numpy as np
import pytest
from numpy.testing import assert_allclose

from kalman_adapt.core.belief import GaussianBelief
from kalman_adapt.core.linear_filter import Observation, StateSpaceModel, run_filter
from kalman_adapt.exceptions import ConfigInvalid, KalmanAdaptException, LengthMismatch
from kalman_adapt.experiments.fewshot import FewShotConfig, FeatureKind, generate_regression, run_fewshot_regression
from kalman_adapt.experiments.shift import (
    ShiftConfig,
    kalman_label,
    run_streaming_shift,
    sgd_label,
    trailing_mean,
)
from kalman_adapt.experiments.spectral_run import (
    BasisKind,
    SpectralConfig,
    run_spectral,
    run_spectral_experiment,
)
from kalman_adapt.experiments.toy_llm import ToyLLMConfig, run_toy_llm
from kalman_adapt.experiments.trace import (
    ExperimentTrace,
    StepRecord,
    half_life,
    map_seeds,
    seed_streams,
    squared_errors,
)
from kalman_adapt.spectral.basis import SpectralBasis

SMALL_FEWSHOT = FewShotConfig(
    dim=2, num_samples=20, checkpoints=(5, 10, 20), prior_scales=(1.0,), noise_grid=(0.25,),
)
SMALL_SHIFT = ShiftConfig(horizon=200, reference_window=50, recovery_horizon=50, comparison_horizon=20)
SMALL_TOY = ToyLLMConfig(num_demo=8, num_heldout=16, reference_sequences=4, num_prompts=4, prompt_lengths=(2, 4, 8))


# ── traces ─────────────────────────────────────────────────────────────────────

def test_records_must_increase():
    with pytest.raises(KalmanAdaptException):
        ExperimentTrace([StepRecord(step=2), StepRecord(step=2)], '', 0)


def test_trace_from_filter_steps():
    steps = run_filter(
        StateSpaceModel.random_walk(1), GaussianBelief([0.0], [[1.0]]), [Observation([1.0], 1.0, 2.0)],
    )
    trace = ExperimentTrace.from_filter_steps(steps, 'abc', 7, truths=[0.0], heldout=[3.5])
    record = trace.records[0]
    assert record.step == 1
    assert record.trace_P == pytest.approx(0.5)
    assert record.lambda_min == pytest.approx(2.0)
    assert record.gain_norm == pytest.approx(0.5)
    assert record.innovation == pytest.approx(2.0)
    assert record.sq_error == pytest.approx(1.0)
    assert record.heldout_metric == 3.5
    assert trace.seed == 7 and trace.config_fingerprint == 'abc'

    with pytest.raises(LengthMismatch):
        ExperimentTrace.from_filter_steps(steps, '', 0, heldout=[1.0, 2.0])


def test_baseline_trace_has_only_errors():
    trace = ExperimentTrace.from_iterates(np.array([[1.0], [2.0]]), [0.0], '', 0, 'sgd_0.1')
    assert_allclose(trace.column('sq_error'), [1.0, 4.0])
    assert np.all(np.isnan(trace.column('trace_P')))
    assert trace.label == 'sgd_0.1'


def test_overflowed_estimates_have_infinite_error():
    errors = squared_errors(np.array([[np.inf], [np.nan], [1.0]]), [0.0])
    assert errors.tolist() == [np.inf, np.inf, 1.0]


def test_half_life():
    assert half_life([4.0, 3.0, 2.0, 1.0], 4.0) == 3
    assert half_life([4.0, 3.0], 4.0) == 3


def test_seed_streams_are_reproducible_and_distinct():
    first = [g.standard_normal() for g in seed_streams(5, 3)]
    second = [g.standard_normal() for g in seed_streams(5, 3)]
    assert first == second
    assert len(set(first)) == 3


@pytest.mark.parametrize('workers', [1, 2])
def test_map_seeds_keeps_order(workers):
    assert map_seeds(str, [3, 1, 2], max_workers=workers) == ['3', '1', '2']


# ── few-shot regression ────────────────────────────────────────────────────────

def test_fewshot_summary():
    result = run_fewshot_regression(SMALL_FEWSHOT, [0, 1, 2], fingerprint='fp')
    assert result.name == 'fewshot'
    assert len(result.traces) == 3
    assert all(len(t) == 20 and t.config_fingerprint == 'fp' for t in result.traces)

    summary = result.summary
    assert summary['num_seeds'] == 3
    assert len(summary['kalman']['mse']) == 20
    assert set(summary['kalman']['checkpoints']) == {'5', '10', '20'}
    assert set(summary['sgd']) == {'0.01', '0.05', '0.1', '0.5'}
    assert summary['comparison']['step'] == 10
    assert summary['best_sgd_step'] in SMALL_FEWSHOT.sgd_step_sizes
    assert summary['calibration']['num_trials'] == 60
    assert summary['kalman']['mean_trace'][-1] < summary['kalman']['mean_trace'][0]


def test_fewshot_is_deterministic():
    first = run_fewshot_regression(SMALL_FEWSHOT, [4, 5, 6])
    second = run_fewshot_regression(SMALL_FEWSHOT, [4, 5, 6])
    assert first.summary == second.summary
    assert [t.records for t in first.traces] == [t.records for t in second.traces]


def test_noise_sweep_shares_everything_but_the_noise_scale():
    clean, _ = generate_regression(SMALL_FEWSHOT, 3, 0.0)
    noisy, _ = generate_regression(SMALL_FEWSHOT, 3, 1.0)
    assert_allclose(clean.regressors, noisy.regressors)
    assert_allclose(clean.truth, noisy.truth)
    assert_allclose(clean.targets, clean.regressors @ clean.truth)
    assert clean.noise_var == pytest.approx(1e-12)


def test_encoder_features_are_bounded():
    config = FewShotConfig(dim=3, num_samples=10, checkpoints=(10,), comparison_step=5, features=FeatureKind.ENCODER)
    dataset, test = generate_regression(config, 0)
    assert np.all(np.abs(dataset.regressors) < 1.0)
    assert test.shape[1] == 3


@pytest.mark.parametrize('kwargs, field', [
    ({'noise_var': -1.0}, 'fewshot.noise_var'),
    ({'num_samples': 20}, 'fewshot.checkpoints'),
    ({'sgd_step_sizes': (0.1, 0.0)}, 'fewshot.sgd_step_sizes'),
])
def test_fewshot_config_validation(kwargs, field):
    with pytest.raises(ConfigInvalid) as info:
        FewShotConfig(**kwargs)
    assert info.value.field == field


# ── streaming shift ────────────────────────────────────────────────────────────

def test_trailing_mean():
    assert_allclose(trailing_mean(np.array([2.0, 4.0, 6.0, 8.0]), 2), [2.0, 3.0, 5.0, 7.0])


def test_shift_arms():
    result = run_streaming_shift(SMALL_SHIFT, [0, 1])
    labels = {t.label for t in result.traces}
    assert labels == {kalman_label(0.0), kalman_label(0.01)} | {sgd_label(s) for s in SMALL_SHIFT.sgd_step_sizes}
    assert len(result.traces) == 12
    assert all(len(t) == 200 for t in result.traces)

    arms = result.summary['arms']
    assert result.summary['shift_time'] == 100
    frozen, tracking = arms['kalman_q0'], arms['kalman_q0.01']
    assert frozen['late_post_shift_level'] > tracking['late_post_shift_level']
    assert result.summary['best_pre_shift_sgd'].startswith('sgd_')


@pytest.mark.slow
def test_tracking_filter_beats_best_sgd_after_shift():
    summary = run_streaming_shift(ShiftConfig(), list(range(20))).summary
    arms = summary['arms']
    sgd = arms[summary['best_pre_shift_sgd']]['matched_horizon_error']
    tracking = arms[kalman_label(0.01)]['matched_horizon_error']
    assert sgd is None or tracking < sgd


def test_shift_config_validation():
    with pytest.raises(ConfigInvalid) as info:
        ShiftConfig(horizon=100, shift_time=100)
    assert info.value.field == 'shift.shift_time'
    assert ShiftConfig(horizon=300).change_point == 150


# ── toy language model ─────────────────────────────────────────────────────────

def test_toy_llm_leaves_model_frozen():
    result = run_toy_llm(SMALL_TOY, [0, 1])
    summary = result.summary
    assert summary['frozen_params_untouched']
    assert summary['num_seeds'] == 2
    assert summary['param_dim'] == 64
    assert 'control' in summary
    assert summary['prompt_informativeness']['num_prompts'] == 4
    assert summary['control']['num_contracted'] == 2
    for outcome in result.summary['seeds']:
        assert outcome['prompt_spearman'] is None or -1.0 <= outcome['prompt_spearman'] <= 1.0
    for trace in result.traces:
        assert len(trace) == 8
        assert not np.any(np.isnan(trace.column('heldout_metric')))
        assert np.all(np.diff(trace.column('trace_P')) <= 1e-12)


def test_toy_llm_config_validation():
    with pytest.raises(ConfigInvalid):
        ToyLLMConfig(latent_dim=64)
    with pytest.raises(ConfigInvalid) as info:
        ToyLLMConfig(num_prompts=2)
    assert info.value.field == 'toy_llm.num_prompts'
    with pytest.raises(ConfigInvalid) as info:
        ToyLLMConfig(prompt_lengths=(0, 4))
    assert info.value.field == 'toy_llm.prompt_lengths'
    with pytest.raises(ConfigInvalid):
        ToyLLMConfig(prompt_lengths=())
    assert ToyLLMConfig(num_prompts=0, prompt_lengths=()).num_prompts == 0


@pytest.mark.slow
def test_toy_llm_control_and_prompt_sweep():
    summary = run_toy_llm(ToyLLMConfig(num_demo=30), list(range(10))).summary
    control = summary['control']
    assert control['mean_improvement'] < 0.1 * summary['mean_improvement']
    assert control['negligible']
    assert control['num_contracted'] == summary['num_seeds']
    sweep = summary['prompt_informativeness']
    assert sweep['num_tasks'] == 10
    assert sweep['mean_spearman'] > 0


# ── spectral ───────────────────────────────────────────────────────────────────

@pytest.mark.parametrize('basis', list(BasisKind))
def test_static_spectral_matches_oracle(basis):
    result = run_spectral(SpectralConfig(basis=basis, num_obs=60), [0, 1])
    summary = result.summary
    assert summary['max_oracle_deviation'] <= 1e-8
    assert summary['num_monotone'] == 2
    assert len(result.traces) == 2


def test_drifting_spectral_skips_oracle():
    summary = run_spectral(SpectralConfig(num_obs=30, q=0.01, drift_std=0.05), [0]).summary
    assert 'max_oracle_deviation' not in summary
    assert summary['mean_final_error'] >= 0


def test_run_spectral_experiment(rng):
    trace = run_spectral_experiment(SpectralBasis.cosine(32, 4), np.ones(4), 25, 0.1, 0.0, rng)
    assert len(trace) == 25
    assert np.all(np.isfinite(trace.column('sq_error')))


def test_spectral_config_validation():
    with pytest.raises(ConfigInvalid):
        SpectralConfig(domain_size=4, num_components=8)
    with pytest.raises(ConfigInvalid):
        SpectralConfig(coefficient_scales=(1.0, 2.0))
