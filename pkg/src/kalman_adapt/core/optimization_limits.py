"""Batch Oracles, Optimization Limits and Baselines

Closed-form counterparts of the sequential filter on linear regression
y_t = φ_tᵀα + v_t with v_t ~ N(0, R):

- `batch_posterior`: the one-shot Bayesian (recursive least squares) posterior,
  which the static filter must reproduce exactly.
- `gd_limit_step`: the Kalman mean update with frozen covariance P_0 and
  R = εI, whose ε → 0 limit is a P_0-preconditioned gradient step.
- `sgd_baseline` / `ridge_baseline`: the fixed-step SGD and ridge regression
  comparison points.
- `regret_curve`: instantaneous and cumulative prediction regret of a filter
  run, next to the log-determinant growth term.
"""

from __future__ import annotations
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from kalman_adapt.core.belief import GaussianBelief, PrecisionBelief, from_information, to_information
from kalman_adapt.core.linear_filter import FilterStep, Observation
from kalman_adapt.exceptions import (
    DimensionMismatch,
    LengthMismatch,
    MissingTruth,
    NonPositiveDefinite,
    SingularInnovation,
    SingularSystem,
)


class RegressionDataset:
    """
    Scalar-output linear regression data.

    Parameters
    ----------
    regressors : ArrayLike
        φ_1..φ_n stacked as an (n, d) array.
    targets : ArrayLike
        y_1..y_n.
    noise_var : float
        Observation noise variance R (σ²), strictly positive.
    truth : ArrayLike | None
        The regression parameter that generated the data, when known.

    Attributes & Properties
    -----------------------
    size : int
        n.
    dim : int
        d.
    observations : list[Observation]
        One scalar Observation per row, ready for the filter. Cached property.
    """

    def __init__(
        self,
        regressors: ArrayLike,
        targets: ArrayLike,
        noise_var: float,
        truth: ArrayLike | None = None,
    ) -> None:
        phi = np.atleast_2d(np.asarray(regressors, dtype=float))
        y = np.atleast_1d(np.asarray(targets, dtype=float))
        if phi.size == 0:
            phi = phi.reshape(0, phi.shape[-1] if phi.ndim == 2 else 0)
        if y.ndim != 1 or phi.shape[0] != y.shape[0]:
            raise LengthMismatch(f"{phi.shape[0]} regressors but {y.shape[0]} targets")
        if not noise_var > 0:
            raise NonPositiveDefinite(f"noise_var must be positive, got {noise_var}")
        if truth is not None:
            truth = np.asarray(truth, dtype=float)
            if truth.shape != (phi.shape[1],):
                raise DimensionMismatch(f"truth has shape {truth.shape}, expected ({phi.shape[1]},)")
            truth.setflags(write=False)
        phi.setflags(write=False)
        y.setflags(write=False)
        self.regressors = phi
        self.targets = y
        self.noise_var = float(noise_var)
        self.truth = truth

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(size={self.size}, dim={self.dim}, noise_var={self.noise_var})"

    def __len__(self) -> int:
        return self.size

    @property
    def size(self) -> int:
        return self.regressors.shape[0]

    @property
    def dim(self) -> int:
        return self.regressors.shape[1]

    @cached_property
    def observations(self) -> list[Observation]:
        return [Observation(phi, self.noise_var, y) for phi, y in zip(self.regressors, self.targets)]

    def head(self, n: int) -> 'RegressionDataset':
        """The first n samples."""
        return RegressionDataset(self.regressors[:n], self.targets[:n], self.noise_var, self.truth)


def batch_posterior(dataset: RegressionDataset, prior: GaussianBelief) -> GaussianBelief:
    """
    One-shot posterior after all samples:

    Λ_n = P_0⁻¹ + (1/R)Σφ_iφ_iᵀ,  μ_n = Λ_n⁻¹(P_0⁻¹μ_0 + (1/R)Σφ_i y_i).
    """
    if prior.dim != dataset.dim:
        raise DimensionMismatch(f"prior has dimension {prior.dim}, dataset {dataset.dim}")
    if dataset.size == 0:
        return prior
    info = to_information(prior)
    phi, y = dataset.regressors, dataset.targets
    matrix = info.information_matrix + phi.T @ phi / dataset.noise_var
    vector = info.information_vector + phi.T @ y / dataset.noise_var
    return from_information(PrecisionBelief((matrix + matrix.T) / 2, vector))


def gd_limit_step(belief: GaussianBelief, obs: Observation, epsilon: float) -> np.ndarray:
    """
    Kalman mean update with the covariance frozen at P_0 and R = ε.

    μ⁺ = μ + P_0 Hᵀ (H P_0 Hᵀ + ε)⁻¹ (y − Hμ). At ε = 0 this is the
    preconditioned gradient step with step size P_0 that the update approaches
    as the observation noise vanishes. Nothing is propagated: the covariance of
    `belief` is never modified.

    Raises
    ------
    SingularInnovation
        If H P_0 Hᵀ + ε ≤ 0.
    """
    if obs.obs_dim != 1:
        raise DimensionMismatch(f"gd_limit_step requires a scalar observation, got m={obs.obs_dim}")
    if epsilon < 0:
        raise SingularInnovation(f"epsilon must be nonnegative, got {epsilon}")
    if belief.dim != obs.state_dim:
        raise DimensionMismatch(f"belief has dimension {belief.dim}, observation {obs.state_dim}")
    h = obs.operator[0]
    p_h = belief.covariance @ h
    s = float(h @ p_h) + epsilon
    if not s > 0:
        raise SingularInnovation(f"H P_0 Hᵀ + ε = {s:.3e} is not positive")
    residual = float(obs.value[0] - h @ belief.mean)
    return belief.mean + p_h * (residual / s)


def sgd_baseline(dataset: RegressionDataset, init: ArrayLike, step_size: float) -> np.ndarray:
    """
    One pass of per-sample squared-loss SGD: α ← α + η φ_t (y_t − φ_tᵀα).

    Returns the (n, d) array of iterates after each sample. The step size is
    constant and unclipped, so iterates may overflow to inf/nan.
    """
    if not step_size > 0:
        raise ValueError(f"step_size must be positive, got {step_size}")
    alpha = np.array(init, dtype=float)
    if alpha.shape != (dataset.dim,):
        raise DimensionMismatch(f"init has shape {alpha.shape}, expected ({dataset.dim},)")
    iterates = np.empty((dataset.size, dataset.dim))
    with np.errstate(over='ignore', invalid='ignore'):
        for t, (phi, y) in enumerate(zip(dataset.regressors, dataset.targets)):
            alpha = alpha + step_size * phi * (y - phi @ alpha)
            iterates[t] = alpha
    return iterates


def ridge_baseline(dataset: RegressionDataset, lam: float) -> np.ndarray:
    """
    (λI + ΣφφT)⁻¹ Σφy.

    Equals the `batch_posterior` mean under the prior N(0, (R/λ)I).

    Raises
    ------
    SingularSystem
        If λ = 0 and the design is rank-deficient.
    """
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    phi, y = dataset.regressors, dataset.targets
    gram = phi.T @ phi
    if lam == 0 and np.linalg.matrix_rank(gram) < dataset.dim:
        raise SingularSystem("design is rank-deficient and lambda = 0")
    try:
        return cho_solve(cho_factor(lam * np.eye(dataset.dim) + gram, lower=True), phi.T @ y)
    except LinAlgError as e:
        raise SingularSystem(f"ridge system is singular: {e}") from e


# ── regret ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RegretCurve:
    """
    Regret of one-step-ahead predictions along a run.

    Attributes & Properties
    -----------------------
    steps : np.ndarray
        1..n.
    instantaneous : np.ndarray
        r_t = (φ_tᵀμ_{t−1} − φ_tᵀα*)².
    cumulative : np.ndarray
        Σ_{s≤t} r_s.
    log_det_bound : np.ndarray
        log det(I + (1/R)Σ_{s≤t} φ_sφ_sᵀ).
    """

    steps: np.ndarray
    instantaneous: np.ndarray
    cumulative: np.ndarray
    log_det_bound: np.ndarray

    def __len__(self) -> int:
        return len(self.steps)

    def rows(self) -> list[tuple[int, float, float, float]]:
        return list(zip(
            self.steps.tolist(),
            self.instantaneous.tolist(),
            self.cumulative.tolist(),
            self.log_det_bound.tolist(),
        ))


def regret_curve(trace: Sequence[FilterStep], dataset: RegressionDataset) -> RegretCurve:
    """
    Regret of the predicted means μ_{t|t−1} of `trace` against the dataset truth.

    Raises
    ------
    MissingTruth
        If the dataset carries no truth.
    LengthMismatch
        If trace and dataset differ in length.
    """
    if dataset.truth is None:
        raise MissingTruth("regret needs the true regression parameter")
    if len(trace) != dataset.size:
        raise LengthMismatch(f"trace has {len(trace)} steps, dataset {dataset.size} samples")

    phi = dataset.regressors
    predicted = np.array([s.prior.mean for s in trace]).reshape(dataset.size, dataset.dim)
    instantaneous = np.einsum('ij,ij->i', phi, predicted - dataset.truth) ** 2

    log_det = np.empty(dataset.size)
    accumulated = np.eye(dataset.dim)
    for t, row in enumerate(phi):
        accumulated += np.outer(row, row) / dataset.noise_var
        log_det[t] = np.linalg.slogdet(accumulated)[1]

    return RegretCurve(
        steps=np.arange(1, dataset.size + 1),
        instantaneous=instantaneous,
        cumulative=np.cumsum(instantaneous),
        log_det_bound=log_det,
    )


def growth_exponent(horizons: ArrayLike, values: ArrayLike) -> float:
    """Least-squares slope of log(values) against log(horizons): the power-law exponent."""
    horizons = np.asarray(horizons, dtype=float)
    values = np.asarray(values, dtype=float)
    return float(np.polyfit(np.log(horizons), np.log(values), 1)[0])
