"""Streaming Regression with an Abrupt Parameter Shift

The truth x* is replaced by x* + Δ at `shift_time` (half the horizon by
default). Kalman filters with Q = q·I for every q in the grid and fixed-step
SGD for every step size track the stream; the per-step squared tracking error
‖estimate − x*_t‖² is reported per arm.

Recovery of an arm is measured on the seed-averaged error curve, smoothed with
a trailing mean: the first step after the shift at which the smoothed error is
back within `recovery_factor` of the arm's own pre-shift level.
"""

from __future__ import annotations
from dataclasses import dataclass
from functools import partial
from typing import Any
import logging

import numpy as np

from kalman_adapt.core.belief import GaussianBelief
from kalman_adapt.core.linear_filter import StateSpaceModel, run_filter
from kalman_adapt.core.optimization_limits import RegressionDataset, sgd_baseline
from kalman_adapt.exceptions import require
from kalman_adapt.experiments.trace import (
    ExperimentResult,
    ExperimentTrace,
    filter_errors,
    map_seeds,
    seed_streams,
    squared_errors,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShiftConfig:
    dim: int = 4
    noise_var: float = 0.1
    horizon: int = 1000
    shift_norm: float = 2.0
    shift_time: int | None = None
    q_grid: tuple[float, ...] = (0.0, 0.01)
    sgd_step_sizes: tuple[float, ...] = (0.01, 0.05, 0.1, 0.5)
    prior_scale: float = 10.0
    reference_window: int = 100
    recovery_horizon: int = 100
    recovery_factor: float = 1.1
    smoothing: int = 10
    comparison_horizon: int = 50

    def __post_init__(self) -> None:
        require(self.dim >= 1, 'shift.dim', "must be at least 1")
        require(self.noise_var > 0, 'shift.noise_var', "must be positive")
        require(self.horizon >= 2, 'shift.horizon', "must be at least 2")
        require(self.shift_norm >= 0, 'shift.shift_norm', "must be nonnegative")
        require(self.shift_time is None or 0 < self.shift_time < self.horizon, 'shift.shift_time',
                "must lie strictly inside the horizon")
        require(len(self.q_grid) > 0 and all(q >= 0 for q in self.q_grid), 'shift.q_grid',
                "must be a nonempty list of nonnegative values")
        require(len(self.sgd_step_sizes) > 0 and all(s > 0 for s in self.sgd_step_sizes),
                'shift.sgd_step_sizes', "must be a nonempty list of positive values")
        require(self.prior_scale > 0, 'shift.prior_scale', "must be positive")
        require(1 <= self.reference_window <= self.change_point, 'shift.reference_window',
                "must lie in [1, shift_time]")
        require(self.recovery_horizon >= 1, 'shift.recovery_horizon', "must be at least 1")
        require(self.recovery_factor >= 1, 'shift.recovery_factor', "must be at least 1")
        require(self.smoothing >= 1, 'shift.smoothing', "must be at least 1")
        require(1 <= self.comparison_horizon <= self.horizon - self.change_point, 'shift.comparison_horizon',
                "must fit after the shift")

    @property
    def change_point(self) -> int:
        return self.horizon // 2 if self.shift_time is None else self.shift_time


def kalman_label(q: float) -> str:
    return f"kalman_q{q:g}"


def sgd_label(step_size: float) -> str:
    return f"sgd_{step_size:g}"


def generate_shift_stream(config: ShiftConfig, seed: int) -> tuple[RegressionDataset, np.ndarray]:
    """Stream with per-step truths (horizon, d); the truth jumps by Δ at the change point."""
    truth_rng, data_rng, noise_rng = seed_streams(seed, 3)
    before = truth_rng.standard_normal(config.dim)
    direction = truth_rng.standard_normal(config.dim)
    delta = config.shift_norm * direction / np.linalg.norm(direction)

    truths = np.tile(before, (config.horizon, 1))
    truths[config.change_point:] += delta
    regressors = data_rng.standard_normal((config.horizon, config.dim))
    noise = np.sqrt(config.noise_var) * noise_rng.standard_normal(config.horizon)
    targets = np.einsum('ij,ij->i', regressors, truths) + noise
    return RegressionDataset(regressors, targets, config.noise_var), truths


@dataclass
class ShiftOutcome:
    seed: int
    traces: list[ExperimentTrace]
    errors: dict[str, np.ndarray]


def run_shift_seed(config: ShiftConfig, seed: int, fingerprint: str = '') -> ShiftOutcome:
    dataset, truths = generate_shift_stream(config, seed)
    prior = GaussianBelief.isotropic(config.dim, config.prior_scale)
    traces, errors = [], {}
    for q in config.q_grid:
        steps = run_filter(StateSpaceModel.random_walk(config.dim, q), prior, dataset.observations)
        label = kalman_label(q)
        errors[label] = filter_errors(steps, truths)
        traces.append(ExperimentTrace.from_filter_steps(steps, fingerprint, seed, label, truths=truths))
    for eta in config.sgd_step_sizes:
        iterates = sgd_baseline(dataset, np.zeros(config.dim), eta)
        label = sgd_label(eta)
        errors[label] = squared_errors(iterates, truths)
        traces.append(ExperimentTrace.from_iterates(iterates, truths, fingerprint, seed, label))
    return ShiftOutcome(seed, traces, errors)


# ── aggregate ──────────────────────────────────────────────────────────────────

def trailing_mean(series: np.ndarray, window: int) -> np.ndarray:
    """Mean of the last `window` values (fewer at the start)."""
    cumulative = np.cumsum(np.insert(series, 0, 0.0))
    ends = np.arange(1, len(series) + 1)
    starts = np.maximum(ends - window, 0)
    with np.errstate(invalid='ignore'):
        return (cumulative[ends] - cumulative[starts]) / (ends - starts)


def arm_report(config: ShiftConfig, curve: np.ndarray) -> dict[str, Any]:
    """Pre-shift level, recovery step and late post-shift level of one seed-averaged curve."""
    t0 = config.change_point
    pre_level = float(np.mean(curve[t0 - config.reference_window:t0]))
    smoothed = trailing_mean(curve[t0:], config.smoothing)[:config.recovery_horizon]
    recovered = np.flatnonzero(smoothed <= config.recovery_factor * pre_level)
    late = curve[t0 + config.recovery_horizon // 2:t0 + config.recovery_horizon]
    return {
        'pre_shift_level': pre_level if np.isfinite(pre_level) else None,
        'recovery_step': int(recovered[0]) + 1 if recovered.size else None,
        'late_post_shift_level': float(np.mean(late)) if late.size and np.all(np.isfinite(late)) else None,
        'matched_horizon_error': _finite_mean(curve[t0:t0 + config.comparison_horizon]),
    }


def _finite_mean(values: np.ndarray) -> float | None:
    value = float(np.mean(values))
    return value if np.isfinite(value) else None


def summarize_shift(config: ShiftConfig, outcomes: list[ShiftOutcome]) -> dict[str, Any]:
    labels = list(outcomes[0].errors)
    curves = {label: np.mean(np.stack([o.errors[label] for o in outcomes]), axis=0) for label in labels}
    arms = {label: arm_report(config, curve) for label, curve in curves.items()}

    sgd_labels = [sgd_label(eta) for eta in config.sgd_step_sizes]
    best_sgd = min(
        sgd_labels,
        key=lambda label: arms[label]['pre_shift_level'] if arms[label]['pre_shift_level'] is not None else np.inf,
    )
    return {
        'num_seeds': len(outcomes),
        'dim': config.dim,
        'shift_time': config.change_point,
        'shift_norm': config.shift_norm,
        'arms': arms,
        'best_pre_shift_sgd': best_sgd,
        'curves': {label: [v if np.isfinite(v) else None for v in curve.tolist()] for label, curve in curves.items()},
    }


def run_streaming_shift(
    config: ShiftConfig,
    seeds: list[int],
    fingerprint: str = '',
    max_workers: int = 1,
) -> ExperimentResult:
    logger.info("Streaming shift: d=%d, ‖Δ‖=%g, %d seeds", config.dim, config.shift_norm, len(seeds))
    outcomes = map_seeds(partial(run_shift_seed, config, fingerprint=fingerprint), seeds, max_workers)
    return ExperimentResult(
        name='shift',
        traces=[t for o in outcomes for t in o.traces],
        summary=summarize_shift(config, outcomes),
    )
