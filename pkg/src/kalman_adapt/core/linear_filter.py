"""Linear-Gaussian Kalman Recursion

This module implements the exact Kalman recursion for the state-space model

.. code-block:: text

    x_t = A x_{t-1} + w_t,      w_t ~ N(0, Q)
    y_t = H_t x_t + v_t,        v_t ~ N(0, R_t)

in moment form (`predict`, `update`, `run_filter`) and information form
(`predict_information`, `update_information`, `run_information_filter`), plus
the diagonal-covariance approximation (`diagonal_update`).

Notes
-----
- The covariance update uses the Joseph form (I−KH)P(I−KH)ᵀ + KRKᵀ, which is
  algebraically equal to (I−KH)P.
- The loop writes the covariance update as (I − K H)P; an alternative
  placement of the transpose (I − K Hᵀ)P is dimensionally inconsistent with a
  row-vector H and is not used.
- S_t is factorized (Cholesky), never inverted.
"""

from __future__ import annotations
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Sequence, TypedDict

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from kalman_adapt.core.belief import (
    GaussianBelief,
    PrecisionBelief,
    from_information,
    to_information,
)
from kalman_adapt.exceptions import (
    DimensionMismatch,
    KalmanAdaptException,
    NonPositiveDefinite,
    NotDiagonal,
    SingularInnovation,
)

PSD_TOLERANCE = 1e-10


class StateSpaceModel:
    """
    Linear latent dynamics x_t = A x_{t−1} + w_t with w_t ~ N(0, Q).

    Parameters
    ----------
    transition : ArrayLike
        Transition matrix A (d×d).
    process_noise : ArrayLike
        Process-noise covariance Q (d×d, symmetric PSD). Symmetrized on input.

    Attributes & Properties
    -----------------------
    transition : np.ndarray
        Read-only A.
    process_noise : np.ndarray
        Read-only symmetrized Q.
    state_dim : int
        d.
    transition_norm : float
        Spectral norm ‖A‖, the bound M_A of the boundedness assumption. Cached property.
    is_static : bool
        True when A = I and Q = 0 (recursive least squares). Cached property.

    Methods
    -------
    random_walk(dim: int, q: float = 0.0) -> StateSpaceModel
        A = I and Q = q·I.
    """

    def __init__(self, transition: ArrayLike, process_noise: ArrayLike) -> None:
        a = np.atleast_2d(np.asarray(transition, dtype=float))
        q = np.atleast_2d(np.asarray(process_noise, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"transition must be square, got shape {a.shape}")
        if q.shape != a.shape:
            raise DimensionMismatch(f"process_noise shape {q.shape} does not match transition {a.shape}")
        q = (q + q.T) / 2
        if q.size and np.linalg.eigvalsh(q)[0] < -PSD_TOLERANCE:
            raise NonPositiveDefinite("process_noise is not positive semidefinite")
        if not np.all(np.isfinite(a)):
            raise DimensionMismatch("transition has non-finite entries")
        a.setflags(write=False)
        q.setflags(write=False)
        self.transition = a
        self.process_noise = q

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(state_dim={self.state_dim})"

    @classmethod
    def random_walk(cls, dim: int, q: float = 0.0) -> 'StateSpaceModel':
        return cls(np.eye(dim), q * np.eye(dim))

    @property
    def state_dim(self) -> int:
        return self.transition.shape[0]

    @cached_property
    def transition_norm(self) -> float:
        return float(np.linalg.norm(self.transition, 2))

    @cached_property
    def is_static(self) -> bool:
        return bool(
            np.array_equal(self.transition, np.eye(self.state_dim))
            and not np.any(self.process_noise)
        )


class Observation:
    """
    Linear-Gaussian observation y = H x + v with v ~ N(0, R).

    Scalars and vectors are promoted: a 1-D `operator` becomes a 1×d row, a
    scalar `noise_cov` a 1×1 matrix and a scalar `value` a 1-vector.

    Parameters
    ----------
    operator : ArrayLike
        Observation operator H (m×d).
    noise_cov : ArrayLike
        Observation-noise covariance R (m×m, symmetric positive definite).
    value : ArrayLike
        Observed value y (m-vector).

    Attributes & Properties
    -----------------------
    obs_dim : int
        m.
    state_dim : int
        d.
    information : np.ndarray
        Information increment HᵀR⁻¹H (d×d). Cached property.
    information_vector : np.ndarray
        HᵀR⁻¹y. Cached property.
    operator_norm : float
        ‖H‖, the bound M_H. Cached property.
    noise_bound : float
        λ_max(R), the bound M_R. Cached property.
    """

    def __init__(self, operator: ArrayLike, noise_cov: ArrayLike, value: ArrayLike) -> None:
        h = np.asarray(operator, dtype=float)
        h = h.reshape(1, -1) if h.ndim <= 1 else h
        r = np.atleast_2d(np.asarray(noise_cov, dtype=float))
        y = np.atleast_1d(np.asarray(value, dtype=float)).reshape(-1)
        m = h.shape[0]
        if r.shape != (m, m) or y.shape != (m,):
            raise DimensionMismatch(
                f"operator {h.shape}, noise_cov {r.shape} and value {y.shape} are inconsistent"
            )
        r = (r + r.T) / 2
        if m == 1:
            if not r[0, 0] > 0:
                raise NonPositiveDefinite("noise_cov must be positive")
        elif np.linalg.eigvalsh(r)[0] <= 0:
            raise NonPositiveDefinite("noise_cov is not positive definite")
        for array in (h, r, y):
            array.setflags(write=False)
        self.operator = h
        self.noise_cov = r
        self.value = y

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(obs_dim={self.obs_dim}, state_dim={self.state_dim})"

    @property
    def obs_dim(self) -> int:
        return self.operator.shape[0]

    @property
    def state_dim(self) -> int:
        return self.operator.shape[1]

    def _solve_noise(self, rhs: np.ndarray) -> np.ndarray:
        if self.obs_dim == 1:
            return rhs / self.noise_cov[0, 0]
        try:
            return cho_solve(cho_factor(self.noise_cov, lower=True), rhs)
        except LinAlgError as e:
            raise SingularInnovation(f"noise_cov factorization failed: {e}") from e

    @cached_property
    def information(self) -> np.ndarray:
        info = self.operator.T @ self._solve_noise(self.operator)
        return (info + info.T) / 2

    @cached_property
    def information_vector(self) -> np.ndarray:
        return self.operator.T @ self._solve_noise(self.value)

    @cached_property
    def operator_norm(self) -> float:
        return float(np.linalg.norm(self.operator, 2))

    @cached_property
    def noise_bound(self) -> float:
        return float(np.linalg.eigvalsh(self.noise_cov)[-1])


class FilterStepDict(TypedDict):
    index: int
    trace: float
    precision_min_eigenvalue: float
    gain_norm: float
    innovation: list[float]


@dataclass(frozen=True, eq=False)
class FilterStep:
    """
    One predict/update cycle of the filter.

    Attributes & Properties
    -----------------------
    prior : GaussianBelief
        Predicted belief (μ_{t|t−1}, P_{t|t−1}).
    posterior : GaussianBelief
        Updated belief (μ_t, P_t).
    gain : np.ndarray
        Kalman gain K_t (d×m).
    innovation : np.ndarray
        y_t − H_t μ_{t|t−1} (m-vector).
    innovation_cov : np.ndarray
        S_t = H_t P_{t|t−1} H_tᵀ + R_t (m×m).
    observation : Observation | None
        The observation consumed by the step.
    index : int
        Position of the observation in its stream (0-based).
    gain_norm : float
        Spectral norm ‖K_t‖. Cached property.
    """

    prior: GaussianBelief
    posterior: GaussianBelief
    gain: np.ndarray
    innovation: np.ndarray
    innovation_cov: np.ndarray
    observation: Observation | None = None
    index: int = 0

    @cached_property
    def gain_norm(self) -> float:
        return float(np.linalg.norm(self.gain, 2))

    @property
    def predictive_mean(self) -> np.ndarray:
        """H_t μ_{t|t−1}: mean of the posterior predictive distribution of y_t."""
        return self.observation.value - self.innovation

    def as_dict(self) -> FilterStepDict:
        return {
            'index': self.index,
            'trace': self.posterior.trace,
            'precision_min_eigenvalue': self.posterior.precision_min_eigenvalue,
            'gain_norm': self.gain_norm,
            'innovation': self.innovation.tolist(),
        }


def _check_dims(dim: int, other: int, what: str) -> None:
    if dim != other:
        raise DimensionMismatch(f"{what}: expected state dimension {dim}, got {other}")


def predict(model: StateSpaceModel, belief: GaussianBelief) -> GaussianBelief:
    """Time update: μ ← Aμ, P ← APAᵀ + Q (symmetrized)."""
    _check_dims(model.state_dim, belief.dim, 'predict')
    a = model.transition
    covariance = a @ belief.covariance @ a.T + model.process_noise
    return GaussianBelief(a @ belief.mean, (covariance + covariance.T) / 2)


def update(belief: GaussianBelief, obs: Observation) -> FilterStep:
    """
    Measurement update of a predicted belief.

    K = P Hᵀ S⁻¹ with S = H P Hᵀ + R solved by Cholesky; μ⁺ = μ + K(y − Hμ);
    P⁺ in Joseph form, symmetrized.

    Raises
    ------
    SingularInnovation
        If S is not positive definite.
    """
    _check_dims(belief.dim, obs.state_dim, 'update')
    h, r = obs.operator, obs.noise_cov
    p = belief.covariance

    cross = p @ h.T
    s = h @ cross + r
    s = (s + s.T) / 2
    if obs.obs_dim == 1:
        # a 1x1 Cholesky factor is a square root; solving against it is a division
        if not s[0, 0] > 0:
            raise SingularInnovation(f"innovation covariance {s[0, 0]:.3e} is not positive")
        gain = cross / s[0, 0]
    else:
        try:
            gain = cho_solve(cho_factor(s, lower=True), cross.T).T
        except (LinAlgError, ValueError) as e:
            raise SingularInnovation(f"innovation covariance is not positive definite: {e}") from e

    innovation = obs.value - h @ belief.mean
    mean = belief.mean + gain @ innovation
    i_kh = np.eye(belief.dim) - gain @ h
    covariance = i_kh @ p @ i_kh.T + gain @ r @ gain.T
    posterior = GaussianBelief(mean, (covariance + covariance.T) / 2)
    return FilterStep(
        prior=belief,
        posterior=posterior,
        gain=gain,
        innovation=innovation,
        innovation_cov=s,
        observation=obs,
    )


def predict_information(model: StateSpaceModel, belief: PrecisionBelief) -> PrecisionBelief:
    """
    Time update in information form.

    Identity dynamics without process noise leave the belief unchanged exactly;
    otherwise the prediction goes through the moment form.
    """
    _check_dims(model.state_dim, belief.dim, 'predict_information')
    if model.is_static:
        return belief
    return to_information(predict(model, from_information(belief)))


def update_information(belief: PrecisionBelief, obs: Observation) -> PrecisionBelief:
    """Additive measurement update: Λ⁺ = Λ + HᵀR⁻¹H, η⁺ = η + HᵀR⁻¹y."""
    _check_dims(belief.dim, obs.state_dim, 'update_information')
    matrix = belief.information_matrix + obs.information
    return PrecisionBelief(
        (matrix + matrix.T) / 2,
        belief.information_vector + obs.information_vector,
    )


def project_diagonal(belief: GaussianBelief) -> GaussianBelief:
    """Same mean, covariance reduced to its diagonal."""
    return GaussianBelief(belief.mean, np.diag(np.diag(belief.covariance)))


def diagonal_step(belief: GaussianBelief, obs: Observation) -> FilterStep:
    """
    Scalar-observation update of a diagonal-covariance belief, as a FilterStep.

    Applies the exact update and then discards the off-diagonal entries of P⁺.
    This is an approximation: a single step preserves trace(P⁺), but the
    discarded cross-covariance is no longer available to later updates.

    Raises
    ------
    NotDiagonal
        If the prior covariance has nonzero off-diagonal entries.
    DimensionMismatch
        If the observation is not scalar.
    """
    if obs.obs_dim != 1:
        raise DimensionMismatch(f"diagonal update requires a scalar observation, got m={obs.obs_dim}")
    p = belief.covariance
    if np.any(p - np.diag(np.diag(p))):
        raise NotDiagonal("diagonal update requires a diagonal prior covariance")
    step = update(belief, obs)
    return FilterStep(
        prior=step.prior,
        posterior=project_diagonal(step.posterior),
        gain=step.gain,
        innovation=step.innovation,
        innovation_cov=step.innovation_cov,
        observation=obs,
    )


def diagonal_update(belief: GaussianBelief, obs: Observation) -> GaussianBelief:
    """Posterior of `diagonal_step`."""
    return diagonal_step(belief, obs).posterior


def run_filter(
    model: StateSpaceModel,
    init: GaussianBelief,
    observations: Sequence[Observation],
    diagonal: bool = False,
) -> list[FilterStep]:
    """
    Alternate predict and update over an observation stream.

    For each observation: predict with (A, Q), then update; one FilterStep per
    observation. With `diagonal=True` the predicted covariance is projected to
    its diagonal and each update is a `diagonal_update`.

    Errors raised by a step are re-raised with the failing step index.
    """
    _check_dims(model.state_dim, init.dim, 'run_filter')
    steps = []
    belief = project_diagonal(init) if diagonal else init
    for i, obs in enumerate(observations):
        try:
            prior = predict(model, belief)
            if diagonal:
                step = diagonal_step(project_diagonal(prior), obs)
            else:
                step = update(prior, obs)
        except KalmanAdaptException as e:
            raise e.at_step(i) from e
        step = replace(step, index=i)
        steps.append(step)
        belief = step.posterior
    return steps


def run_information_filter(
    model: StateSpaceModel,
    init: PrecisionBelief,
    observations: Sequence[Observation],
) -> list[PrecisionBelief]:
    """
    Information-form counterpart of `run_filter`.

    Returns the precision beliefs after each observation; the initial belief is
    not included.
    """
    _check_dims(model.state_dim, init.dim, 'run_information_filter')
    beliefs = []
    belief = init
    for i, obs in enumerate(observations):
        try:
            belief = update_information(predict_information(model, belief), obs)
        except KalmanAdaptException as e:
            raise e.at_step(i) from e
        beliefs.append(belief)
    return beliefs
