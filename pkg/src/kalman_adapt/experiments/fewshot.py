"""Few-Shot Linear Regression

Data y_t = φ_tᵀx* + ε_t with x* ~ N(0, I) and ε_t ~ N(0, σ²). Regressors are
i.i.d. standard normal, or the output of a fixed random tanh encoder applied to
standard-normal inputs (a stand-in for a frozen pretrained feature map).

Per seed the Kalman filter (A = I, Q = 0, prior N(0, λI)), fixed-step SGD for
every configured step size and ridge regression refitted on every prefix are
run on the same samples. The aggregate report holds the seed-averaged error
curves, the posterior-predictive calibration of the filter, the sensitivity to
the prior scale λ and a sweep over the noise level σ².
"""

from __future__ import annotations
from dataclasses import dataclass, field
from enum import StrEnum
from functools import partial
from typing import Any
import logging

import numpy as np

from kalman_adapt.core.belief import GaussianBelief
from kalman_adapt.core.linear_filter import StateSpaceModel, run_filter
from kalman_adapt.core.optimization_limits import RegressionDataset, ridge_baseline, sgd_baseline
from kalman_adapt.exceptions import require
from kalman_adapt.experiments.calibration import PredictiveEvents, compute_calibration
from kalman_adapt.experiments.trace import (
    ExperimentResult,
    ExperimentTrace,
    filter_errors,
    map_seeds,
    seed_streams,
    squared_errors,
)

logger = logging.getLogger(__name__)

NOISE_FLOOR = 1e-12
NUM_TEST_POINTS = 256
MSE_ENVELOPE = 1.1


class FeatureKind(StrEnum):
    GAUSSIAN = 'gaussian'
    ENCODER = 'encoder'


@dataclass(frozen=True)
class FewShotConfig:
    """
    Parameters of the few-shot regression.

    `noise_var` may be 0 (noise-free data); the filter then uses R = 1e-12.
    `comparison_step` is the sample count at which Kalman and SGD are compared.
    """

    dim: int = 8
    noise_var: float = 0.25
    prior_scale: float = 10.0
    num_samples: int = 50
    sgd_step_sizes: tuple[float, ...] = (0.01, 0.05, 0.1, 0.5)
    ridge_lambda: float = 1.0
    prior_scales: tuple[float, ...] = (1.0, 10.0, 100.0)
    noise_grid: tuple[float, ...] = (0.01, 0.25, 1.0, 4.0)
    features: FeatureKind = FeatureKind.GAUSSIAN
    encoder_width: int = 16
    nominal_levels: tuple[float, ...] = (0.5, 0.9)
    comparison_step: int = 10
    checkpoints: tuple[int, ...] = (5, 10, 20, 50)

    def __post_init__(self) -> None:
        require(self.dim >= 1, 'fewshot.dim', "must be at least 1")
        require(self.noise_var >= 0, 'fewshot.noise_var', "must be nonnegative")
        require(self.prior_scale > 0, 'fewshot.prior_scale', "must be positive")
        require(self.num_samples >= 1, 'fewshot.num_samples', "must be at least 1")
        require(all(s > 0 for s in self.sgd_step_sizes), 'fewshot.sgd_step_sizes', "must be positive")
        require(len(self.sgd_step_sizes) > 0, 'fewshot.sgd_step_sizes', "must not be empty")
        require(self.ridge_lambda >= 0, 'fewshot.ridge_lambda', "must be nonnegative")
        require(all(s > 0 for s in self.prior_scales), 'fewshot.prior_scales', "must be positive")
        require(all(s > 0 for s in self.noise_grid), 'fewshot.noise_grid', "must be positive")
        require(self.features in tuple(FeatureKind), 'fewshot.features',
                f"must be one of {[k.value for k in FeatureKind]}")
        require(self.encoder_width >= 1, 'fewshot.encoder_width', "must be at least 1")
        require(all(0 < level < 1 for level in self.nominal_levels), 'fewshot.nominal_levels',
                "must lie in (0, 1)")
        require(1 <= self.comparison_step <= self.num_samples, 'fewshot.comparison_step',
                "must lie in [1, num_samples]")
        require(all(1 <= c <= self.num_samples for c in self.checkpoints), 'fewshot.checkpoints',
                "must lie in [1, num_samples]")


# ── data ───────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class FeatureMap:
    """Identity on standard-normal inputs, or a fixed random tanh encoder."""

    kind: FeatureKind
    weights: np.ndarray | None = None

    @classmethod
    def build(cls, config: FewShotConfig, rng: np.random.Generator) -> 'FeatureMap':
        if config.features == FeatureKind.GAUSSIAN:
            return cls(FeatureKind.GAUSSIAN)
        weights = rng.standard_normal((config.dim, config.encoder_width)) * np.sqrt(2.0 / config.encoder_width)
        return cls(FeatureKind.ENCODER, weights)

    def draw(self, n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == FeatureKind.GAUSSIAN:
            return rng.standard_normal((n, dim))
        return np.tanh(rng.standard_normal((n, self.weights.shape[1])) @ self.weights.T)


def generate_regression(
    config: FewShotConfig,
    seed: int,
    noise_var: float | None = None,
) -> tuple[RegressionDataset, np.ndarray]:
    """
    One seeded regression task and a matching batch of test regressors.

    The same seed gives the same x*, regressors and noise shape for every
    `noise_var`, so a noise sweep differs only in the noise scale.
    """
    noise_var = config.noise_var if noise_var is None else noise_var
    truth_rng, data_rng, noise_rng, encoder_rng = seed_streams(seed, 4)
    feature_map = FeatureMap.build(config, encoder_rng)
    truth = truth_rng.standard_normal(config.dim)
    regressors = feature_map.draw(config.num_samples, config.dim, data_rng)
    test = feature_map.draw(NUM_TEST_POINTS, config.dim, data_rng)
    targets = regressors @ truth + np.sqrt(noise_var) * noise_rng.standard_normal(config.num_samples)
    return RegressionDataset(regressors, targets, max(noise_var, NOISE_FLOOR), truth=truth), test


# ── one seed ───────────────────────────────────────────────────────────────────

@dataclass
class FewShotOutcome:
    """Per-seed curves; every array is indexed by sample count − 1."""

    seed: int
    trace: ExperimentTrace
    kalman_errors: np.ndarray
    kalman_predictive: np.ndarray
    trace_series: np.ndarray
    sgd_errors: dict[float, np.ndarray]
    sgd_predictive: dict[float, np.ndarray]
    ridge_errors: np.ndarray
    sensitivity: dict[float, np.ndarray]
    noise_sweep: dict[float, dict[str, Any]]
    events: PredictiveEvents = field(repr=False)


def _kalman(dataset: RegressionDataset, prior_scale: float):
    model = StateSpaceModel.random_walk(dataset.dim, 0.0)
    return run_filter(model, GaussianBelief.isotropic(dataset.dim, prior_scale), dataset.observations)


def _predictive(estimates: np.ndarray, truth: np.ndarray, test: np.ndarray, noise_var: float) -> np.ndarray:
    with np.errstate(over='ignore', invalid='ignore'):
        mse = np.mean(((np.asarray(estimates) - truth) @ test.T) ** 2, axis=1) + noise_var
    return np.where(np.isfinite(mse), mse, np.inf)


def run_fewshot_seed(config: FewShotConfig, seed: int, fingerprint: str = '') -> FewShotOutcome:
    dataset, test = generate_regression(config, seed)
    truth = dataset.truth
    steps = _kalman(dataset, config.prior_scale)
    means = np.array([s.posterior.mean for s in steps])

    sgd_iterates = {
        eta: sgd_baseline(dataset, np.zeros(config.dim), eta) for eta in config.sgd_step_sizes
    }
    ridge = np.array([
        ridge_baseline(dataset.head(n), config.ridge_lambda) if config.ridge_lambda > 0 or n >= config.dim
        else np.full(config.dim, np.nan)
        for n in range(1, config.num_samples + 1)
    ])

    noise_sweep = {}
    for level in config.noise_grid:
        swept, _ = generate_regression(config, seed, level)
        kalman_final = filter_errors(_kalman(swept, config.prior_scale), truth)[-1]
        sgd_final = {
            eta: squared_errors(sgd_baseline(swept, np.zeros(config.dim), eta)[-1:], truth)[0]
            for eta in config.sgd_step_sizes
        }
        noise_sweep[level] = {'kalman': float(kalman_final), 'sgd': sgd_final}

    return FewShotOutcome(
        seed=seed,
        trace=ExperimentTrace.from_filter_steps(steps, fingerprint, seed, truths=truth),
        kalman_errors=filter_errors(steps, truth),
        kalman_predictive=_predictive(means, truth, test, config.noise_var),
        trace_series=np.array([s.posterior.trace for s in steps]),
        sgd_errors={eta: squared_errors(it, truth) for eta, it in sgd_iterates.items()},
        sgd_predictive={eta: _predictive(it, truth, test, config.noise_var) for eta, it in sgd_iterates.items()},
        ridge_errors=squared_errors(ridge, truth),
        sensitivity={
            scale: filter_errors(_kalman(dataset, scale), truth) for scale in config.prior_scales
        },
        noise_sweep=noise_sweep,
        events=PredictiveEvents.from_filter_steps(steps),
    )


# ── aggregate ──────────────────────────────────────────────────────────────────

def _finite(value: float) -> float | None:
    return float(value) if np.isfinite(value) else None


def _curve(arrays: list[np.ndarray]) -> np.ndarray:
    return np.mean(np.stack(arrays), axis=0)


def _at(curve: np.ndarray, checkpoints: tuple[int, ...]) -> dict[str, float | None]:
    return {str(n): _finite(curve[n - 1]) for n in checkpoints}


def summarize_fewshot(config: FewShotConfig, outcomes: list[FewShotOutcome]) -> dict[str, Any]:
    """Seed-averaged report over per-seed outcomes."""
    k = config.comparison_step
    kalman = _curve([o.kalman_errors for o in outcomes])
    kalman_predictive = _curve([o.kalman_predictive for o in outcomes])
    mean_trace = _curve([o.trace_series for o in outcomes])

    sgd = {eta: _curve([o.sgd_errors[eta] for o in outcomes]) for eta in config.sgd_step_sizes}
    sgd_predictive = {eta: _curve([o.sgd_predictive[eta] for o in outcomes]) for eta in config.sgd_step_sizes}
    best_eta = min(config.sgd_step_sizes, key=lambda eta: sgd[eta][k - 1])
    ridge = _curve([o.ridge_errors for o in outcomes])

    worst_ratio = float(np.max(kalman / mean_trace))

    sweep = {}
    for level in config.noise_grid:
        kalman_final = float(np.mean([o.noise_sweep[level]['kalman'] for o in outcomes]))
        sgd_final = {
            eta: float(np.mean([o.noise_sweep[level]['sgd'][eta] for o in outcomes]))
            for eta in config.sgd_step_sizes
        }
        best_sgd = min(sgd_final.values())
        sweep[str(level)] = {
            'kalman': _finite(kalman_final),
            'best_sgd': _finite(best_sgd),
            'kalman_better': bool(kalman_final < best_sgd),
        }

    calibration = compute_calibration([o.events for o in outcomes], config.nominal_levels)
    return {
        'num_seeds': len(outcomes),
        'dim': config.dim,
        'noise_var': config.noise_var,
        'features': str(config.features),
        'kalman': {
            'mse': kalman.tolist(),
            'predictive_mse': kalman_predictive.tolist(),
            'mean_trace': mean_trace.tolist(),
            'checkpoints': _at(kalman, config.checkpoints),
        },
        'sgd': {
            str(eta): {
                'mse': [_finite(v) for v in sgd[eta]],
                'predictive_mse': [_finite(v) for v in sgd_predictive[eta]],
                'checkpoints': _at(sgd[eta], config.checkpoints),
            }
            for eta in config.sgd_step_sizes
        },
        'best_sgd_step': best_eta,
        'ridge': {'lambda': config.ridge_lambda, 'checkpoints': _at(ridge, config.checkpoints)},
        'comparison': {
            'step': k,
            'kalman_mse': _finite(kalman[k - 1]),
            'best_sgd_mse': _finite(sgd[best_eta][k - 1]),
            'kalman_predictive_mse': _finite(kalman_predictive[k - 1]),
            'best_sgd_predictive_mse': _finite(sgd_predictive[best_eta][k - 1]),
            'final_predictive_mse': _finite(kalman_predictive[-1]),
        },
        'mse_envelope': {'worst_ratio': worst_ratio, 'within': worst_ratio <= MSE_ENVELOPE},
        'prior_sensitivity': {
            str(scale): _at(_curve([o.sensitivity[scale] for o in outcomes]), config.checkpoints)
            for scale in config.prior_scales
        },
        'noise_sweep': sweep,
        'calibration': calibration.as_dict(),
    }


def run_fewshot_regression(
    config: FewShotConfig,
    seeds: list[int],
    fingerprint: str = '',
    max_workers: int = 1,
) -> ExperimentResult:
    """Run every seed and aggregate; one Kalman trace per seed."""
    logger.info("Few-shot regression: d=%d, σ²=%g, %d seeds", config.dim, config.noise_var, len(seeds))
    outcomes = map_seeds(partial(run_fewshot_seed, config, fingerprint=fingerprint), seeds, max_workers)
    return ExperimentResult(
        name='fewshot',
        traces=[o.trace for o in outcomes],
        summary=summarize_fewshot(config, outcomes),
    )
