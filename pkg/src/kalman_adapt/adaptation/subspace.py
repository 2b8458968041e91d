"""Low-Rank Adaptation Subspace and Extended-Kalman Token Adaptation

The adapted parameters of the toy model are θ = θ_0 + B x with a frozen base
θ_0, a fixed D×d embedding B and a low-dimensional latent state x. Each
demonstration token is turned into a scalar linear observation of x through
the linearization of its negative log-likelihood,

.. code-block:: text

    ℓ_t(θ_0 + B x) ≈ ℓ_t(θ_0 + B μ) + H_t (x − μ),   H_t = ∇_θℓ_tᵀ B,

and the latent state is inferred with the Kalman recursion from
`kalman_adapt.core`. No gradient step is ever applied to θ_0 or to the frozen
extractor.

Observation construction
------------------------
Each token reports its nll as `nll_decrement` nats below the current
linearized prediction (by default the decrement equals R). With decrement R
the gradient of the Gaussian pseudo-likelihood at μ equals −H_t, the gradient
of the token log-likelihood, and its curvature HᵀH/R is the empirical Fisher
term of that token. The update is then an online natural-gradient step whose
fixed point is a stationary point of the expected token nll.
"""

from __future__ import annotations
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike

from kalman_adapt.adaptation.toy_model import ToyTokenModel, context_target_pairs
from kalman_adapt.core.belief import GaussianBelief
from kalman_adapt.core.linear_filter import (
    FilterStep,
    Observation,
    StateSpaceModel,
    diagonal_step,
    predict,
    project_diagonal,
    update,
)
from kalman_adapt.core.observability import GramianReport, gramian
from kalman_adapt.exceptions import DimensionMismatch, KalmanAdaptException, NonPositiveDefinite

MIN_SINGULAR_VALUE = 1e-8


class AdaptationSubspace:
    """
    Affine parameter subspace θ = θ_0 + B x.

    Parameters
    ----------
    base_params : ArrayLike
        θ_0 (D-vector). Stored as a read-only copy.
    embedding : ArrayLike
        B (D×d) with d < D.
    check_rank : bool
        Require linearly independent columns (smallest singular value > 1e-8).
        Disable only for deliberately degenerate subspaces such as B = 0.

    Attributes & Properties
    -----------------------
    latent_dim : int
        d.
    ambient_dim : int
        D.
    min_singular_value : float
        Smallest singular value of B. Cached property.

    Methods
    -------
    params(state: ArrayLike) -> np.ndarray
        θ_0 + B·state.
    random(base_params, latent_dim, rng, column_norm=None, orthogonal_to=None) -> AdaptationSubspace
        Random subspace with orthogonal columns of equal norm (√D by default),
        optionally orthogonal to given θ-space directions.
    """

    def __init__(self, base_params: ArrayLike, embedding: ArrayLike, check_rank: bool = True) -> None:
        theta = np.array(base_params, dtype=float)
        b = np.array(embedding, dtype=float)
        if theta.ndim != 1 or b.ndim != 2 or b.shape[0] != theta.shape[0]:
            raise DimensionMismatch(
                f"embedding shape {b.shape} does not match base_params shape {theta.shape}"
            )
        if not b.shape[1] < b.shape[0]:
            raise DimensionMismatch(f"latent dimension {b.shape[1]} must be below ambient {b.shape[0]}")
        theta.setflags(write=False)
        b.setflags(write=False)
        self.base_params = theta
        self.embedding = b
        if check_rank and self.min_singular_value <= MIN_SINGULAR_VALUE:
            raise DimensionMismatch(
                f"embedding columns are not linearly independent (σ_min = {self.min_singular_value:.3e})"
            )

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(latent_dim={self.latent_dim}, ambient_dim={self.ambient_dim})"

    @classmethod
    def random(
        cls,
        base_params: ArrayLike,
        latent_dim: int,
        rng: np.random.Generator,
        column_norm: float | None = None,
        orthogonal_to: ArrayLike | None = None,
    ) -> 'AdaptationSubspace':
        ambient_dim = np.shape(base_params)[0]
        column_norm = np.sqrt(ambient_dim) if column_norm is None else column_norm
        draw = rng.standard_normal((ambient_dim, latent_dim))
        if orthogonal_to is not None:
            avoid = np.linalg.qr(np.asarray(orthogonal_to, dtype=float).reshape(ambient_dim, -1))[0]
            draw = draw - avoid @ (avoid.T @ draw)
        q = np.linalg.qr(draw)[0]
        return cls(base_params, column_norm * q)

    @property
    def latent_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.embedding.shape[0]

    @cached_property
    def min_singular_value(self) -> float:
        return float(np.linalg.svd(self.embedding, compute_uv=False)[-1])

    def params(self, state: ArrayLike) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        if state.shape != (self.latent_dim,):
            raise DimensionMismatch(f"state has shape {state.shape}, expected ({self.latent_dim},)")
        return self.base_params + self.embedding @ state


# ── tasks ──────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class AdaptationTask:
    """
    Demonstration and heldout tokens sampled from θ_0 + B(shift·x*).

    `true_shift_direction` is the unit vector x*; the latent state that
    generated the data is `true_state` = shift·x*.
    """

    subspace: AdaptationSubspace
    true_shift_direction: np.ndarray
    shift: float
    demonstration: list[int]
    heldout_contexts: list[list[int]] = field(repr=False)
    heldout_targets: list[int] = field(repr=False)

    @property
    def true_state(self) -> np.ndarray:
        return self.shift * self.true_shift_direction

    @property
    def true_params(self) -> np.ndarray:
        return self.subspace.params(self.true_state)


def generate_task(
    model: ToyTokenModel,
    subspace: AdaptationSubspace,
    rng: np.random.Generator,
    num_demo: int = 32,
    num_heldout: int = 64,
    shift: float = 2.0,
    direction: ArrayLike | None = None,
) -> AdaptationTask:
    """
    Sample a task whose true logits are the frozen model's shifted along B·x*.

    x* is drawn uniformly on the unit sphere unless `direction` is given (it is
    then normalized; a zero direction gives the unshifted task).
    """
    if direction is None:
        direction = rng.standard_normal(subspace.latent_dim)
    direction = np.array(direction, dtype=float)
    norm = np.linalg.norm(direction)
    direction = direction / norm if norm > 0 else direction
    direction.setflags(write=False)

    true_params = subspace.params(shift * direction)
    demonstration = model.sample(true_params, num_demo, rng)
    heldout_contexts, heldout_targets = context_target_pairs(model.sample(true_params, num_heldout, rng))
    return AdaptationTask(
        subspace=subspace,
        true_shift_direction=direction,
        shift=shift,
        demonstration=demonstration,
        heldout_contexts=heldout_contexts,
        heldout_targets=heldout_targets,
    )


# ── token observations ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TokenObservation:
    """
    Scalar linearized observation contributed by one token.

    Attributes & Properties
    -----------------------
    operator : np.ndarray
        H_t = g_tᵀB (d-vector).
    value : float
        Pseudo-observation of H_t x.
    noise_var : float
        R_t.
    raw_nll : float
        ℓ_t at θ_0.
    nll : float
        ℓ_t at the linearization point.
    token_index : int
        Position of the token in the demonstration.
    """

    operator: np.ndarray
    value: float
    noise_var: float
    raw_nll: float
    nll: float
    token_index: int = 0

    def as_observation(self) -> Observation:
        return Observation(self.operator, self.noise_var, self.value)


def linearize_token(
    model: ToyTokenModel,
    subspace: AdaptationSubspace,
    mean: ArrayLike,
    context: Sequence[int],
    target: int,
    noise_var: float,
    relinearize: bool = True,
    nll_decrement: float | None = None,
    token_index: int = 0,
) -> TokenObservation:
    """
    Linearize the token nll into a scalar observation of the latent state.

    With `relinearize=True` (extended Kalman filter) the gradient is taken at
    θ_0 + B·mean; otherwise always at θ_0. The observed value is
    H·mean − `nll_decrement`, so the innovation y − H·mean is the constant
    −`nll_decrement` (−R by default) for every token. It is the nll reduction
    asked of the update, not a residual between the realized nll and a target
    level; the `innovation` column of a toy-model trace therefore reads −R
    throughout. The realized token enters only through H.
    """
    if not noise_var > 0:
        raise NonPositiveDefinite(f"noise_var must be positive, got {noise_var}")
    mean = np.asarray(mean, dtype=float)
    point = mean if relinearize else np.zeros(subspace.latent_dim)
    theta = subspace.params(point)
    operator = model.token_gradient(theta, context, target) @ subspace.embedding
    operator.setflags(write=False)
    decrement = noise_var if nll_decrement is None else nll_decrement
    return TokenObservation(
        operator=operator,
        value=float(operator @ mean - decrement),
        noise_var=float(noise_var),
        raw_nll=model.token_nll(subspace.base_params, context, target),
        nll=model.token_nll(theta, context, target),
        token_index=token_index,
    )


# ── adaptation loop ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class AdaptationResult:
    """
    Output of `ekf_adapt`.

    Attributes & Properties
    -----------------------
    steps : list[FilterStep]
        One filter step per demonstration token.
    token_observations : list[TokenObservation]
        The linearized observations that were consumed.
    heldout_nll : np.ndarray
        Mean heldout nll at θ_0 + B·μ_t after each token (empty without heldout data).
    baseline_nll : float
        Mean heldout nll at θ_0.
    """

    steps: list[FilterStep]
    token_observations: list[TokenObservation]
    heldout_nll: np.ndarray
    baseline_nll: float

    @property
    def final_mean(self) -> np.ndarray:
        return self.steps[-1].posterior.mean

    @property
    def final_nll(self) -> float:
        return float(self.heldout_nll[-1]) if len(self.heldout_nll) else self.baseline_nll

    @property
    def improvement(self) -> float:
        """Heldout nll at θ_0 minus heldout nll after the last token."""
        return self.baseline_nll - self.final_nll

    @property
    def trace_series(self) -> np.ndarray:
        return np.array([s.posterior.trace for s in self.steps])

    def state_errors(self, true_state: ArrayLike) -> np.ndarray:
        """‖μ_t − x*‖ after each token."""
        means = np.array([s.posterior.mean for s in self.steps])
        return np.linalg.norm(means - np.asarray(true_state, dtype=float), axis=1)


def ekf_adapt(
    model: ToyTokenModel,
    subspace: AdaptationSubspace,
    prior: GaussianBelief,
    tokens: Sequence[int],
    noise_var: float = 1.0,
    process_noise: float | ArrayLike = 0.0,
    heldout: tuple[Sequence[Sequence[int]], Sequence[int]] | None = None,
    relinearize: bool = True,
    diagonal: bool = False,
) -> AdaptationResult:
    """
    Infer the latent adaptation state from a demonstration sequence.

    For each token t: linearize ℓ_t at the current mean, predict with A = I and
    the process noise (q·I for a scalar q), update; then evaluate the mean
    heldout nll at θ_0 + B·μ_t. Only the belief changes; θ_0, B and the frozen
    extractor are never written.

    Raises
    ------
    DimensionMismatch
        If the prior dimension differs from the subspace dimension.
    """
    d = subspace.latent_dim
    if prior.dim != d:
        raise DimensionMismatch(f"prior has dimension {prior.dim}, subspace {d}")
    q = np.asarray(process_noise, dtype=float)
    dynamics = StateSpaceModel(np.eye(d), q * np.eye(d) if q.ndim == 0 else q)

    contexts, targets = context_target_pairs(tokens)
    heldout_contexts, heldout_targets = heldout if heldout is not None else ([], [])
    heldout_phi = model.features_batch(heldout_contexts)

    def heldout_nll(state: np.ndarray) -> float:
        return model.features_nll(subspace.params(state), heldout_phi, heldout_targets)

    steps, observations, scores = [], [], []
    belief = project_diagonal(prior) if diagonal else prior
    for i, (context, target) in enumerate(zip(contexts, targets)):
        try:
            token_obs = linearize_token(
                model, subspace, belief.mean, context, target, noise_var,
                relinearize=relinearize, token_index=i,
            )
            predicted = predict(dynamics, belief)
            if diagonal:
                step = diagonal_step(project_diagonal(predicted), token_obs.as_observation())
            else:
                step = update(predicted, token_obs.as_observation())
        except KalmanAdaptException as e:
            raise e.at_step(i) from e
        step = replace(step, index=i)
        steps.append(step)
        observations.append(token_obs)
        belief = step.posterior
        if heldout_targets:
            scores.append(heldout_nll(belief.mean))

    return AdaptationResult(
        steps=steps,
        token_observations=observations,
        heldout_nll=np.array(scores),
        baseline_nll=heldout_nll(np.zeros(d)),
    )


def prompt_gramian(
    observations: Sequence[TokenObservation],
    model: StateSpaceModel,
    T: int | None = None,
    t: int = 0,
) -> GramianReport:
    """Observability Gramian induced by a prompt's token observations; α scores its informativeness."""
    return gramian(model, [o.as_observation() for o in observations], t, T)
