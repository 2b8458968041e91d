"""
Executable property suite.

Each check runs a seeded numerical experiment through the public library and
the experiment drivers and states a pass/fail verdict with the numbers behind
it. `run_checks` runs all of them (or a named subset) and returns a
`VerifyReport`; the CLI turns a failing report into a nonzero exit.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Sequence
import logging
import tempfile
import time

import numpy as np

from kalman_adapt.adaptation.toy_model import ToyTokenModel
from kalman_adapt.core.belief import GaussianBelief, from_information, symmetrize_and_floor, to_information
from kalman_adapt.core.linear_filter import (
    Observation,
    StateSpaceModel,
    diagonal_update,
    run_filter,
    run_information_filter,
    update,
    update_information,
)
from kalman_adapt.core.observability import (
    check_contraction,
    check_information_accumulation,
    gramian,
    mse_vs_trace,
    probe_boundedness,
    window_gramians,
)
from kalman_adapt.core.optimization_limits import (
    RegressionDataset,
    batch_posterior,
    gd_limit_step,
    growth_exponent,
    regret_curve,
)
from kalman_adapt.exceptions import ConfigInvalid
from kalman_adapt.experiments.fewshot import FewShotConfig, generate_regression, run_fewshot_regression
from kalman_adapt.experiments.shift import ShiftConfig, kalman_label, run_streaming_shift
from kalman_adapt.experiments.spectral_run import SpectralConfig, run_spectral
from kalman_adapt.experiments.toy_llm import ToyLLMConfig, run_toy_llm
from kalman_adapt.experiments.trace import ExperimentTrace, seed_streams
from kalman_adapt.harness.io import TRACE_COLUMNS, to_json_value, write_trace
from kalman_adapt.spectral.basis import SpectralBasis, SpectralSignal, spectral_observation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    description: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0

    def as_dict(self) -> dict[str, Any]:
        return {
            'name': self.name,
            'description': self.description,
            'passed': self.passed,
            'seconds': round(self.seconds, 3),
            'details': to_json_value(self.details),
        }


@dataclass(frozen=True)
class VerifyReport:
    results: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[CheckResult]:
        return [r for r in self.results if not r.passed]

    def as_dict(self) -> dict[str, Any]:
        return {
            'passed': self.passed,
            'num_checks': len(self.results),
            'failed': [r.name for r in self.failures],
            'checks': [r.as_dict() for r in self.results],
        }


CheckFunction = Callable[[int, int], tuple[bool, dict[str, Any]]]


@dataclass(frozen=True)
class Check:
    name: str
    description: str
    run: CheckFunction


# ── filter core ────────────────────────────────────────────────────────────────

def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))


def check_rls_equivalence(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    worst_mean = worst_cov = 0.0
    for rng in seed_streams(seed, 100):
        d = int(rng.integers(1, 9))
        n = int(rng.integers(1, 201))
        noise_var = float(rng.uniform(0.25, 2.0))
        prior = GaussianBelief.isotropic(d, float(rng.uniform(1.0, 10.0)), mean=rng.standard_normal(d))
        truth = rng.standard_normal(d)
        phi = rng.standard_normal((n, d))
        dataset = RegressionDataset(phi, phi @ truth + np.sqrt(noise_var) * rng.standard_normal(n), noise_var)
        final = run_filter(StateSpaceModel.random_walk(d), prior, dataset.observations)[-1].posterior
        oracle = batch_posterior(dataset, prior)
        worst_mean = max(worst_mean, _relative(final.mean, oracle.mean))
        worst_cov = max(worst_cov, _relative(final.covariance, oracle.covariance))
    return max(worst_mean, worst_cov) <= 1e-10, {
        'instances': 100, 'max_relative_mean_error': worst_mean, 'max_relative_covariance_error': worst_cov,
    }


def _random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    return np.linalg.qr(rng.standard_normal((d, d)))[0]


def check_dual_form(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    worst = 0.0
    for rng in seed_streams(seed, 50):
        d = int(rng.integers(2, 7))
        model = StateSpaceModel(0.95 * _random_rotation(rng, d), 0.1 * np.eye(d))
        init = GaussianBelief.isotropic(d, 1.0, mean=rng.standard_normal(d))
        observations = []
        for _ in range(100):
            m = int(rng.integers(1, 4))
            root = rng.standard_normal((m, m))
            observations.append(Observation(
                rng.standard_normal((m, d)), root @ root.T + 0.5 * np.eye(m), rng.standard_normal(m),
            ))
        moment = run_filter(model, init, observations)[-1].posterior
        information = from_information(run_information_filter(model, to_information(init), observations)[-1])
        worst = max(
            worst,
            float(np.max(np.abs(moment.mean - information.mean))),
            float(np.max(np.abs(moment.covariance - information.covariance))),
        )
    return worst <= 1e-9, {'models': 50, 'steps': 100, 'max_abs_difference': worst}


def check_scalar_closed_form(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    observations = [Observation(1.0, 1.0, 0.0)] * 1000
    steps = run_filter(StateSpaceModel.random_walk(1), GaussianBelief([0.0], [[1.0]]), observations)
    variances = np.array([s.posterior.covariance[0, 0] for s in steps])
    error = float(np.max(np.abs(variances - 1.0 / (2.0 + np.arange(1000)))))
    return error <= 1e-12, {'steps': 1000, 'max_abs_error': error}


def _random_update_case(rng: np.random.Generator) -> tuple[GaussianBelief, Observation]:
    d = int(rng.integers(1, 11))
    m = int(rng.integers(1, 4))
    root = rng.standard_normal((d, d))
    noise = rng.standard_normal((m, m))
    prior = GaussianBelief(rng.standard_normal(d), root @ root.T + 0.1 * np.eye(d))
    return prior, Observation(rng.standard_normal((m, d)), noise @ noise.T + 0.5 * np.eye(m), rng.standard_normal(m))


def check_monotone_update(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    worst = np.inf
    for rng in seed_streams(seed, 100):
        prior, obs = _random_update_case(rng)
        posterior = update(prior, obs).posterior
        gap = float(np.linalg.eigvalsh(prior.covariance - posterior.covariance)[0]) / prior.spectral_norm
        worst = min(worst, gap)
    return worst >= -1e-9, {'instances': 100, 'min_relative_eigenvalue_of_decrease': worst}


def check_update_exactness(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    worst = 0.0
    for rng in seed_streams(seed, 100):
        prior, obs = _random_update_case(rng)
        posterior = update(prior, obs).posterior
        product = from_information(update_information(to_information(prior), obs))
        worst = max(worst, _relative(posterior.mean, product.mean), _relative(posterior.covariance, product.covariance))
    return worst <= 1e-10, {'instances': 100, 'max_relative_error': worst}


def check_joseph_conditioning(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    smallest = np.inf
    for rng in seed_streams(seed, 50):
        d = int(rng.integers(2, 7))
        m = int(rng.integers(1, 4))
        rotation = _random_rotation(rng, d)
        covariance = (rotation * np.logspace(0, -10, d)) @ rotation.T
        prior = GaussianBelief(np.zeros(d), (covariance + covariance.T) / 2)
        obs = Observation(
            rng.standard_normal((m, d)), np.diag(rng.uniform(0.1, 1.0, m)), rng.standard_normal(m),
        )
        smallest = min(smallest, update(prior, obs).posterior.min_eigenvalue)
    return smallest > 0, {'instances': 50, 'prior_condition_number': 1e10, 'min_posterior_eigenvalue': smallest}


def check_zero_gain_limit(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    prior = GaussianBelief([0.0], [[1.0]])
    noise = np.logspace(-2, 12, 15)
    gains = np.array([abs(update(prior, Observation(1.0, r, 1.0)).gain[0, 0]) for r in noise])
    decreasing = bool(np.all(np.diff(gains) < 0))
    return decreasing and gains[-1] < 1e-11, {
        'noise_variances': noise.tolist(), 'gains': gains.tolist(), 'strictly_decreasing': decreasing,
    }


def check_diagonal_trace(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    worst = np.inf
    for rng in seed_streams(seed, 50):
        prior = GaussianBelief(rng.standard_normal(3), np.diag(rng.uniform(0.5, 2.0, 3)))
        obs = Observation(rng.standard_normal(3), float(rng.uniform(0.1, 1.0)), float(rng.standard_normal()))
        worst = min(worst, diagonal_update(prior, obs).trace - update(prior, obs).posterior.trace)
    return worst >= -1e-12, {'instances': 50, 'dim': 3, 'min_trace_excess': worst}


def check_symmetrize_idempotent(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    drift, lowering = 0.0, 0.0
    for rng in seed_streams(seed, 50):
        d = int(rng.integers(1, 8))
        matrix = rng.standard_normal((d, d))
        once = symmetrize_and_floor(matrix, 1e-12)
        twice = symmetrize_and_floor(once, 1e-12)
        scale = max(1.0, float(np.linalg.norm(once)))
        drift = max(drift, float(np.linalg.norm(twice - once)) / scale)
        before = float(np.linalg.eigvalsh((matrix + matrix.T) / 2)[0])
        lowering = max(lowering, (before - float(np.linalg.eigvalsh(once)[0])) / scale)
    return drift <= 1e-12 and lowering <= 1e-12, {
        'instances': 50, 'max_relative_drift': drift, 'max_relative_eigenvalue_decrease': lowering,
    }


def check_gramian_additivity(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    worst = 0.0
    for rng in seed_streams(seed, 20):
        d = int(rng.integers(2, 6))
        first, second = int(rng.integers(1, 10)), int(rng.integers(1, 10))
        model = StateSpaceModel(0.95 * _random_rotation(rng, d), np.zeros((d, d)))
        observations = []
        for _ in range(first + second):
            m = int(rng.integers(1, 3))
            observations.append(Observation(
                rng.standard_normal((m, d)), np.diag(rng.uniform(0.5, 2.0, m)), rng.standard_normal(m),
            ))
        whole = gramian(model, observations, 0, first + second).gramian
        transport = np.linalg.matrix_power(model.transition, first)
        split = (
            gramian(model, observations, 0, first).gramian
            + transport.T @ gramian(model, observations, first, second).gramian @ transport
        )
        worst = max(worst, _relative(split, whole))
    return worst <= 1e-10, {'instances': 20, 'max_relative_error': worst}


def check_information_accumulation_windows(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    worst_margin, windows = np.inf, 0
    for s in range(10):
        dataset, _ = generate_regression(FewShotConfig(dim=4, num_samples=64), seed + s)
        model = StateSpaceModel.random_walk(4)
        steps = run_filter(model, GaussianBelief.isotropic(4, 10.0), dataset.observations)
        report = check_information_accumulation(steps, window_gramians(model, dataset.observations, 8))
        worst_margin = min(worst_margin, min(w.margin for w in report.windows))
        windows += len(report.windows)
        if not report.passed:
            return False, {'seed': seed + s, **report.as_dict()}
    return True, {'windows': windows, 'min_margin': worst_margin}


def check_exponential_contraction(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    config = FewShotConfig(dim=8, num_samples=48, checkpoints=(20,))
    model = StateSpaceModel.random_walk(8)
    rates, ratios, failures = [], [], []
    for s in range(seed, seed + 200):
        dataset, _ = generate_regression(config, s)
        steps = run_filter(model, GaussianBelief.isotropic(8, config.prior_scale), dataset.observations)
        report = check_contraction(steps, window=8, model=model)
        ratio = steps[19].posterior.trace / steps[0].prior.trace
        rates.append(report.fitted_rate)
        ratios.append(ratio)
        if not (report.passed and ratio < 0.1):
            failures.append(s)
    return not failures, {
        'seeds': 200, 'max_fitted_rate': max(rates), 'max_trace_ratio_at_20': max(ratios), 'failed_seeds': failures,
    }


def check_steady_state(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    model = StateSpaceModel.random_walk(4, 0.01)
    differences, sup_norms, converged = [], [], True
    for rng in seed_streams(seed, 5):
        phi = rng.standard_normal((500, 4))
        dataset = RegressionDataset(phi, phi @ rng.standard_normal(4), 0.25)
        report = probe_boundedness(model, GaussianBelief.isotropic(4, 1.0), dataset.observations, scale=100.0)
        differences.append(report.max_difference)
        sup_norms.append(report.sup_norm)
        converged = converged and bool(report.converged)
    return converged and bool(np.all(np.isfinite(sup_norms))), {
        'runs': 5, 'steps': 500, 'max_difference': max(differences), 'max_sup_norm': max(sup_norms),
    }


# ── estimation quality ─────────────────────────────────────────────────────────

def check_mse_envelope(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    config = FewShotConfig()
    model = StateSpaceModel.random_walk(config.dim)
    traces, truths = [], []
    for s in range(seed, seed + 200):
        dataset, _ = generate_regression(config, s)
        traces.append(run_filter(model, GaussianBelief.isotropic(config.dim, config.prior_scale), dataset.observations))
        truths.append(dataset.truth)
    report = mse_vs_trace(traces, truths)
    return report.passed, {'seeds': 200, 'worst_ratio': report.worst_ratio}


def check_gd_limit(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    epsilons = np.logspace(0, -4, 5)
    slopes = []
    for rng in seed_streams(seed, 20):
        d = int(rng.integers(2, 7))
        root = rng.standard_normal((d, d))
        belief = GaussianBelief(rng.standard_normal(d), np.eye(d) + root @ root.T / d)
        h = rng.standard_normal(d)
        h *= np.sqrt(d) / np.linalg.norm(h)
        obs = Observation(h, 1.0, h @ belief.mean + 1.0 + rng.standard_normal() ** 2)
        limit = gd_limit_step(belief, obs, 0.0)
        distances = [np.linalg.norm(gd_limit_step(belief, obs, eps) - limit) for eps in epsilons]
        slopes.append(growth_exponent(epsilons, distances))
    deviation = float(np.max(np.abs(np.array(slopes) - 1.0)))
    return deviation <= 0.1, {'cases': 20, 'min_slope': min(slopes), 'max_slope': max(slopes)}


def check_regret_growth(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    horizons = np.array([100, 1000, 10000])
    d, noise_var = 4, 0.25
    model = StateSpaceModel.random_walk(d)
    cumulative = np.zeros(len(horizons))
    for truth_rng, data_rng in (seed_streams(s, 2) for s in range(seed, seed + 20)):
        truth = truth_rng.standard_normal(d)
        phi = data_rng.standard_normal((horizons[-1], d))
        y = phi @ truth + np.sqrt(noise_var) * data_rng.standard_normal(horizons[-1])
        dataset = RegressionDataset(phi, y, noise_var, truth=truth)
        curve = regret_curve(run_filter(model, GaussianBelief.isotropic(d, 10.0), dataset.observations), dataset)
        cumulative += curve.cumulative[horizons - 1]
    cumulative /= 20
    exponent = growth_exponent(horizons, cumulative)
    return exponent <= 0.15, {
        'seeds': 20, 'horizons': horizons.tolist(), 'mean_cumulative_regret': cumulative.tolist(),
        'growth_exponent': exponent,
    }


def check_persistent_excitation(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    horizons = (100, 1000, 10000)
    d, noise_var = 4, 0.25
    errors, growing = [], True
    for truth_rng, data_rng in (seed_streams(s, 2) for s in range(seed, seed + 20)):
        truth = truth_rng.standard_normal(d)
        phi = data_rng.standard_normal((horizons[-1], d))
        y = phi @ truth + np.sqrt(noise_var) * data_rng.standard_normal(horizons[-1])
        prior = GaussianBelief.isotropic(d, 10.0)
        posteriors = [batch_posterior(RegressionDataset(phi[:n], y[:n], noise_var), prior) for n in horizons]
        precision = [to_information(p).min_eigenvalue for p in posteriors]
        growing = growing and all(a < b for a, b in zip(precision, precision[1:]))
        errors.append(float(np.linalg.norm(posteriors[-1].mean - truth)))
    return growing and max(errors) < 0.05, {
        'seeds': 20, 'horizons': list(horizons), 'precision_growing': growing, 'max_final_error': max(errors),
    }


def check_fewshot_advantage(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    config = FewShotConfig(dim=4, noise_grid=(), prior_scales=())
    summary = run_fewshot_regression(config, list(range(seed, seed + 200)), max_workers=max_workers).summary
    k = config.comparison_step
    at_k = summary['comparison']['kalman_predictive_mse']
    final = summary['comparison']['final_predictive_mse']
    best_sgd = min(
        (v for v in (arm['predictive_mse'][k - 1] for arm in summary['sgd'].values()) if v is not None),
        default=np.inf,
    )
    return at_k <= 2 * final and at_k < best_sgd, {
        'seeds': 200, 'dim': config.dim, 'kalman_predictive_mse_at_10': at_k,
        'kalman_predictive_mse_at_50': final, 'best_sgd_predictive_mse_at_10': best_sgd,
    }


def check_calibration(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    config = FewShotConfig(noise_grid=(), prior_scales=())
    calibration = run_fewshot_regression(config, list(range(seed, seed + 200)), max_workers=max_workers).summary[
        'calibration'
    ]
    coverage = dict(zip(calibration['nominal_levels'], calibration['empirical_coverage']))[0.9]
    return 0.85 <= coverage <= 0.95 and calibration['num_trials'] >= 200, calibration


# ── experiments ────────────────────────────────────────────────────────────────

def check_shift_tracking(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    config = ShiftConfig()
    summary = run_streaming_shift(config, list(range(seed, seed + 50)), max_workers=max_workers).summary
    tracking, frozen = summary['arms'][kalman_label(0.01)], summary['arms'][kalman_label(0.0)]
    recovered = tracking['recovery_step'] is not None
    froze = (
        frozen['late_post_shift_level'] is not None
        and frozen['late_post_shift_level'] > 5 * tracking['pre_shift_level']
    )
    sgd_error = summary['arms'][summary['best_pre_shift_sgd']]['matched_horizon_error']
    tracking_error = tracking['matched_horizon_error']
    # a diverged SGD arm has no finite error and counts as worse
    beat_sgd = tracking_error is not None and (sgd_error is None or tracking_error < sgd_error)
    return recovered and froze and beat_sgd, {
        'tracking_pre_shift_level': tracking['pre_shift_level'],
        'tracking_recovery_step': tracking['recovery_step'],
        'frozen_late_post_shift_level': frozen['late_post_shift_level'],
        'best_pre_shift_sgd': summary['best_pre_shift_sgd'],
        'sgd_matched_horizon_error': sgd_error,
        'tracking_matched_horizon_error': tracking_error,
    }


@lru_cache(maxsize=1)
def _toy_summary(seed: int, max_workers: int) -> dict[str, Any]:
    """Ten toy-model seeds with 30 demonstration tokens, shared by the token-model checks."""
    config = ToyLLMConfig(num_demo=30)
    return run_toy_llm(config, list(range(seed, seed + 10)), max_workers=max_workers).summary


def check_covariance_first(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    summary = _toy_summary(seed, max_workers)
    return summary['num_covariance_first'] >= 8, {
        'seeds': summary['num_seeds'],
        'num_covariance_first': summary['num_covariance_first'],
        'half_lives': [(r['trace_half_life'], r['error_half_life']) for r in summary['seeds']],
    }


def check_toy_adaptation(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    summary = _toy_summary(seed, max_workers)
    passed = (
        summary['frozen_params_untouched']
        and summary['num_improved'] >= 9
        and summary['num_gain_dropped'] == summary['num_seeds']
    )
    return passed, {
        key: summary[key]
        for key in ('num_seeds', 'frozen_params_untouched', 'num_improved', 'num_gain_dropped', 'mean_improvement')
    }


def check_orthogonal_control(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    summary = _toy_summary(seed, max_workers)
    control = summary['control']
    passed = control['negligible'] and control['num_contracted'] == summary['num_seeds']
    return passed, {'mean_improvement': summary['mean_improvement'], **control}


def check_prompt_informativeness(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    sweep = _toy_summary(seed, max_workers)['prompt_informativeness']
    return sweep['mean_spearman'] is not None and sweep['mean_spearman'] > 0, sweep


def check_softmax_normalization(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    worst = 0.0
    for case, rng in enumerate(seed_streams(seed, 20)):
        model = ToyTokenModel(seed=seed + case)
        params = model.base_params + 5.0 * rng.standard_normal(model.param_dim)
        for _ in range(10):
            context = rng.integers(0, model.vocab_size, size=int(rng.integers(0, 8))).tolist()
            worst = max(worst, abs(float(model.probabilities(params, context).sum()) - 1.0))
    return worst <= 1e-12, {'cases': 200, 'max_abs_deviation': worst}


def check_token_gradient(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    step, worst = 1e-5, 0.0
    for case, rng in enumerate(seed_streams(seed, 20)):
        model = ToyTokenModel(seed=seed + case)
        params = model.base_params + 0.5 * rng.standard_normal(model.param_dim)
        context = rng.integers(0, model.vocab_size, size=int(rng.integers(0, 8))).tolist()
        target = int(rng.integers(model.vocab_size))
        gradient = model.token_gradient(params, context, target)
        numeric = np.empty(model.param_dim)
        for i in range(model.param_dim):
            e = np.zeros(model.param_dim)
            e[i] = step
            numeric[i] = (
                model.token_nll(params + e, context, target) - model.token_nll(params - e, context, target)
            ) / (2 * step)
        worst = max(worst, _relative(numeric, gradient))
    return worst < 1e-4, {'cases': 20, 'max_relative_error': worst}


def check_spectral_equivalence(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    config = SpectralConfig()
    summary = run_spectral(config, list(range(seed, seed + 20)), max_workers=max_workers).summary

    # noise-free signals, K of them, under a near-zero R
    k = config.num_components
    basis = SpectralBasis.cosine(config.domain_size, k)
    recovery = 0.0
    for rng in seed_streams(seed, 5):
        truth = rng.standard_normal(k)
        observations = [
            spectral_observation(SpectralSignal(basis.analyze(basis.synthesize(rng.standard_normal(k))), truth), 1e-10)
            for _ in range(k)
        ]
        steps = run_filter(StateSpaceModel.random_walk(k), GaussianBelief.isotropic(k, 1.0), observations)
        recovery = max(recovery, float(np.linalg.norm(steps[-1].posterior.mean - truth)))
    passed = summary['max_oracle_deviation'] <= 1e-8 and recovery <= 1e-6
    return passed, {
        'max_oracle_deviation': summary['max_oracle_deviation'],
        'noise_free_recovery_error': recovery,
        'mean_final_error': summary['mean_final_error'],
    }


def check_spectral_ordering(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    base = SpectralConfig()
    k = base.num_components
    config = SpectralConfig(coefficient_scales=tuple(1.5 ** np.arange(k)))
    summary = run_spectral(config, list(range(seed, seed + 20)), max_workers=max_workers).summary

    round_trip = 0.0
    for basis in (SpectralBasis.cosine(base.domain_size, k), SpectralBasis.graph_laplacian(base.domain_size, k)):
        for rng in seed_streams(seed, 5):
            coefficients = rng.standard_normal(k)
            error = np.max(np.abs(basis.analyze(basis.synthesize(coefficients)) - coefficients))
            round_trip = max(round_trip, float(error))
    passed = (
        summary['num_monotone'] == summary['num_seeds']
        and summary['num_ordered_by_energy'] >= 0.8 * summary['num_seeds']
        and round_trip <= 1e-10
    )
    return passed, {
        'seeds': summary['num_seeds'],
        'coefficient_scales': list(config.coefficient_scales),
        'num_monotone': summary['num_monotone'],
        'num_ordered_by_energy': summary['num_ordered_by_energy'],
        'max_round_trip_error': round_trip,
    }


def check_golden_header(seed: int, max_workers: int) -> tuple[bool, dict[str, Any]]:
    expected = ','.join(TRACE_COLUMNS)
    steps = run_filter(StateSpaceModel.random_walk(1), GaussianBelief([0.0], [[1.0]]), [Observation(1.0, 1.0, 0.5)] * 3)
    traces = {'empty': ExperimentTrace([], '', seed), 'filled': ExperimentTrace.from_filter_steps(steps, '', seed)}
    lines = {}
    with tempfile.TemporaryDirectory() as directory:
        for name, trace in traces.items():
            lines[name] = write_trace(trace, Path(directory) / f"{name}.csv").read_text(encoding='utf-8').splitlines()
    headers = {name: rows[0] if rows else '' for name, rows in lines.items()}
    passed = (
        all(header == expected for header in headers.values())
        and len(lines['empty']) == 1
        and len(lines['filled']) == 1 + len(steps)
    )
    return passed, {'expected': expected, 'headers': headers, 'rows': {n: len(r) - 1 for n, r in lines.items()}}


CHECKS: tuple[Check, ...] = (
    Check('rls_batch_equivalence', "sequential filter equals the batch posterior (Q=0, A=I)", check_rls_equivalence),
    Check('dual_form', "moment and information filters agree on time-varying models", check_dual_form),
    Check('scalar_closed_form', "scalar filter variance is 1/(1+t)", check_scalar_closed_form),
    Check('monotone_update', "an update never increases the covariance in the Loewner order", check_monotone_update),
    Check('update_exactness', "moment update equals the information-form product of prior and likelihood",
          check_update_exactness),
    Check('joseph_conditioning', "Joseph update keeps P positive definite at condition number 1e10",
          check_joseph_conditioning),
    Check('zero_gain_limit', "gain decreases strictly to zero as R grows", check_zero_gain_limit),
    Check('diagonal_trace', "diagonal update never reports a smaller trace than the full update",
          check_diagonal_trace),
    Check('symmetrize_idempotent', "symmetrize-and-floor is idempotent and never lowers λ_min",
          check_symmetrize_idempotent),
    Check('gramian_additivity', "window Gramians compose across adjacent windows", check_gramian_additivity),
    Check('information_accumulation', "precision gains at least α per Gramian window",
          check_information_accumulation_windows),
    Check('exponential_contraction', "covariance contracts geometrically; trace(P_20) < 10% of trace(P_0)",
          check_exponential_contraction),
    Check('steady_state', "covariances from P_0 and 100·P_0 converge under Q ≻ 0", check_steady_state),
    Check('mse_envelope', "empirical MSE within 1.1·trace(P_t)", check_mse_envelope),
    Check('gd_singular_limit', "frozen-covariance update approaches the gradient step linearly in ε",
          check_gd_limit),
    Check('regret_growth', "cumulative regret grows sub-polynomially", check_regret_growth),
    Check('persistent_excitation', "batch posterior converges to the truth with growing precision",
          check_persistent_excitation),
    Check('covariance_before_mean', "covariance half-life precedes mean-error half-life on the token model",
          check_covariance_first),
    Check('fewshot_advantage', "Kalman reaches near-final error by n=10 and beats fixed-step SGD",
          check_fewshot_advantage),
    Check('shift_tracking', "Q ≻ 0 recovers from a parameter shift and beats the best SGD; Q = 0 stays frozen",
          check_shift_tracking),
    Check('calibration', "90% predictive intervals cover between 85% and 95%", check_calibration),
    Check('token_gradient', "analytic token gradient matches central differences", check_token_gradient),
    Check('toy_adaptation', "token-model adaptation improves heldout nll without writing θ_0",
          check_toy_adaptation),
    Check('orthogonal_control', "a subspace orthogonal to the shift contracts but does not improve",
          check_orthogonal_control),
    Check('prompt_informativeness', "prompt Gramian α rank-correlates positively with improvement",
          check_prompt_informativeness),
    Check('softmax_normalization', "token probabilities sum to one", check_softmax_normalization),
    Check('spectral_equivalence', "spectral estimation equals the batch oracle; exact noise-free recovery",
          check_spectral_equivalence),
    Check('spectral_ordering', "coefficient variances shrink monotonically and rank by signal energy",
          check_spectral_ordering),
    Check('golden_header', "trace CSV header has the fixed column order", check_golden_header),
)
CHECK_NAMES = tuple(c.name for c in CHECKS)


def run_checks(names: Sequence[str] = (), seed: int = 0, max_workers: int = 1) -> VerifyReport:
    """
    Run the named checks (all when empty) in their fixed order.

    A check that raises counts as failed; the exception is recorded in its details.

    Raises
    ------
    ConfigInvalid
        If a name does not match any check.
    """
    unknown = sorted(set(names) - set(CHECK_NAMES))
    if unknown:
        raise ConfigInvalid(f"unknown checks {unknown}; available: {list(CHECK_NAMES)}", field='verify.checks')
    selected = [c for c in CHECKS if not names or c.name in names]
    _toy_summary.cache_clear()

    results = []
    for check in selected:
        logger.info("Checking %s...", check.name)
        start = time.perf_counter()
        try:
            passed, details = check.run(seed, max_workers)
        except Exception as e:
            logger.exception("Check %s raised", check.name)
            passed, details = False, {'error': f"{type(e).__name__}: {e}"}
        seconds = time.perf_counter() - start
        logger.info("%s %s (%.1f s)", '✓' if passed else '✗', check.name, seconds)
        results.append(CheckResult(check.name, check.description, bool(passed), details, seconds))
    return VerifyReport(results)
