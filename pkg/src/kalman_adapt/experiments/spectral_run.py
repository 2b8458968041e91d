"""Bayesian estimation of spectral response coefficients."""

from __future__ import annotations
from dataclasses import dataclass
from enum import StrEnum
from functools import partial
from typing import Any
import logging

import numpy as np
from numpy.typing import ArrayLike

from kalman_adapt.core.belief import GaussianBelief
from kalman_adapt.core.optimization_limits import batch_posterior
from kalman_adapt.exceptions import require
from kalman_adapt.experiments.trace import ExperimentResult, ExperimentTrace, map_seeds, seed_streams
from kalman_adapt.spectral.basis import SpectralBasis, SpectralRun, spectral_filter_run

logger = logging.getLogger(__name__)

FINAL_ERROR_TARGET = 0.1


class BasisKind(StrEnum):
    COSINE = 'cosine'
    LAPLACIAN = 'laplacian'


@dataclass(frozen=True)
class SpectralConfig:
    domain_size: int = 64
    num_components: int = 8
    basis: BasisKind = BasisKind.COSINE
    num_obs: int = 200
    noise_var: float = 0.1
    q: float = 0.0
    drift_std: float = 0.0
    prior_scale: float = 1.0
    coefficient_scales: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        require(self.num_components >= 1, 'spectral.num_components', "must be at least 1")
        require(self.domain_size >= self.num_components, 'spectral.domain_size',
                "must be at least num_components")
        require(self.basis in tuple(BasisKind), 'spectral.basis',
                f"must be one of {', '.join(BasisKind)}")
        require(self.num_obs >= 1, 'spectral.num_obs', "must be at least 1")
        require(self.noise_var > 0, 'spectral.noise_var', "must be positive")
        require(self.q >= 0, 'spectral.q', "must be nonnegative")
        require(self.drift_std >= 0, 'spectral.drift_std', "must be nonnegative")
        require(self.prior_scale > 0, 'spectral.prior_scale', "must be positive")
        require(
            self.coefficient_scales is None
            or (len(self.coefficient_scales) == self.num_components and all(s > 0 for s in self.coefficient_scales)),
            'spectral.coefficient_scales', "must hold one positive scale per component",
        )

    def build_basis(self) -> SpectralBasis:
        if self.basis == BasisKind.LAPLACIAN:
            return SpectralBasis.graph_laplacian(self.domain_size, self.num_components)
        return SpectralBasis.cosine(self.domain_size, self.num_components)

    @property
    def is_static(self) -> bool:
        return self.q == 0 and self.drift_std == 0


def run_spectral_experiment(
    basis: SpectralBasis,
    true_response: ArrayLike,
    num_obs: int,
    noise_var: float,
    q: float,
    rng: np.random.Generator,
    prior_scale: float = 1.0,
    drift_std: float = 0.0,
    coefficient_scales: ArrayLike | None = None,
    fingerprint: str = '',
    seed: int = 0,
) -> ExperimentTrace:
    """Per-step estimation error and trace(P_t) of one spectral filter run."""
    run = spectral_filter_run(
        basis, true_response, num_obs, noise_var, rng,
        q=q, prior_scale=prior_scale, drift_std=drift_std, coefficient_scales=coefficient_scales,
    )
    return ExperimentTrace.from_filter_steps(run.steps, fingerprint, seed, truths=run.truths)


def oracle_deviation(run: SpectralRun, prior: GaussianBelief) -> float:
    """Largest absolute difference between the final filter posterior and the batch posterior."""
    oracle = batch_posterior(run.dataset, prior)
    final = run.steps[-1].posterior
    return float(max(
        np.max(np.abs(final.mean - oracle.mean)),
        np.max(np.abs(final.covariance - oracle.covariance)),
    ))


def variance_ordering(run: SpectralRun) -> dict[str, Any]:
    """
    Whether each P_kk is nonincreasing over the run and whether the final
    variances rank the coefficients inversely to their accumulated Σ c_k².
    """
    variances = np.array([np.diag(s.posterior.covariance) for s in run.steps])
    energy = np.sum(run.dataset.regressors ** 2, axis=0)
    monotone = bool(np.all(np.diff(variances, axis=0) <= 1e-12))
    ordered = bool(np.all(np.argsort(-energy, kind='stable') == np.argsort(variances[-1], kind='stable')))
    return {'monotone': monotone, 'ordered_by_energy': ordered}


@dataclass
class SpectralOutcome:
    seed: int
    trace: ExperimentTrace
    report: dict[str, Any]


def run_spectral_seed(config: SpectralConfig, seed: int, fingerprint: str = '') -> SpectralOutcome:
    truth_rng, data_rng = seed_streams(seed, 2)
    basis = config.build_basis()
    true_response = truth_rng.standard_normal(config.num_components)
    run = spectral_filter_run(
        basis, true_response, config.num_obs, config.noise_var, data_rng,
        q=config.q, prior_scale=config.prior_scale, drift_std=config.drift_std,
        coefficient_scales=config.coefficient_scales,
    )
    report: dict[str, Any] = {'seed': seed, 'final_error': run.final_error}
    if config.is_static:
        prior = GaussianBelief.isotropic(config.num_components, config.prior_scale)
        report['oracle_deviation'] = oracle_deviation(run, prior)
        report.update(variance_ordering(run))
    trace = ExperimentTrace.from_filter_steps(run.steps, fingerprint, seed, truths=run.truths)
    return SpectralOutcome(seed, trace, report)


def summarize_spectral(config: SpectralConfig, outcomes: list[SpectralOutcome]) -> dict[str, Any]:
    reports = [o.report for o in outcomes]
    errors = np.array([r['final_error'] for r in reports])
    summary: dict[str, Any] = {
        'num_seeds': len(outcomes),
        'basis': str(config.basis),
        'num_components': config.num_components,
        'num_obs': config.num_obs,
        'mean_final_error': float(np.mean(errors)),
        'max_final_error': float(np.max(errors)),
        'within_target': bool(np.mean(errors) < FINAL_ERROR_TARGET),
        'seeds': reports,
    }
    if config.is_static:
        summary['max_oracle_deviation'] = max(r['oracle_deviation'] for r in reports)
        summary['num_monotone'] = sum(r['monotone'] for r in reports)
        summary['num_ordered_by_energy'] = sum(r['ordered_by_energy'] for r in reports)
    return summary


def run_spectral(
    config: SpectralConfig,
    seeds: list[int],
    fingerprint: str = '',
    max_workers: int = 1,
) -> ExperimentResult:
    logger.info(
        "Spectral: %s basis, K=%d on n=%d, %d observations, %d seeds",
        config.basis, config.num_components, config.domain_size, config.num_obs, len(seeds),
    )
    outcomes = map_seeds(partial(run_spectral_seed, config, fingerprint=fingerprint), seeds, max_workers)
    return ExperimentResult(
        name='spectral',
        traces=[o.trace for o in outcomes],
        summary=summarize_spectral(config, outcomes),
    )
