"""Toy Autoregressive Token Model

A self-contained softmax language model standing in for a frozen pretrained
network. A seeded random feature extractor (token embeddings, mean pooling
over a context window, a random projection and a tanh) is frozen at
construction; only the linear logit head θ (V×F, flattened to D = V·F) is a
parameter. With a θ-linear head the token gradient is exact in closed form:

.. code-block:: text

    logits = Θ φ(context),   ℓ = −log softmax(logits)[target]
    ∇_θ ℓ = vec((p − e_target) φᵀ)
"""

from __future__ import annotations
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import log_softmax, softmax

from kalman_adapt.exceptions import DimensionMismatch

PAD_TOKEN = 0


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class ToyTokenModel:
    """
    Frozen random feature extractor with a θ-linear softmax head.

    Parameters
    ----------
    vocab_size : int
        V.
    context_window : int
        Number of preceding tokens pooled into the context feature. Shorter
        contexts are left-padded with `PAD_TOKEN`.
    feature_dim : int
        F, the dimension of φ(context). The last feature is a constant 1, so
        every vocabulary row of Θ carries its own bias.
    embedding_dim : int
        Width of the frozen token embeddings.
    seed : int
        Seed of the frozen extractor and of `base_params`.

    Attributes & Properties
    -----------------------
    param_dim : int
        D = V·F.
    base_params : np.ndarray
        θ_0, read-only; drawn once from the seed.
    embeddings, projection, bias : np.ndarray
        The frozen extractor weights, read-only.

    Methods
    -------
    features(context) -> np.ndarray
        φ(context).
    logits(params, context) -> np.ndarray
    probabilities(params, context) -> np.ndarray
    token_nll(params, context, target) -> float
    token_gradient(params, context, target) -> np.ndarray
    mean_nll(params, contexts, targets) -> float
        Average nll over a batch of (context, target) pairs.
    mean_gradient(params, contexts, targets) -> np.ndarray
        Average token gradient over a batch.
    sample(params, length, rng, prefix=()) -> list[int]
        Autoregressive sampling.

    Examples
    --------
    >>> from kalman_adapt.adaptation import ToyTokenModel
    >>> import numpy as np
    >>> model = ToyTokenModel(vocab_size=16, seed=0)
    >>> uniform = np.zeros(model.param_dim)
    >>> round(model.token_nll(uniform, [3, 5], 7), 6) == round(float(np.log(16)), 6)
    True
    """

    def __init__(
        self,
        vocab_size: int = 16,
        context_window: int = 4,
        feature_dim: int = 4,
        embedding_dim: int = 8,
        seed: int = 0,
    ) -> None:
        if vocab_size < 2 or feature_dim < 2 or context_window < 1 or embedding_dim < 1:
            raise DimensionMismatch(
                "vocab_size and feature_dim must be ≥ 2, context_window and embedding_dim ≥ 1"
            )
        self.vocab_size = vocab_size
        self.context_window = context_window
        self.feature_dim = feature_dim
        self.embedding_dim = embedding_dim
        self.seed = seed

        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.embeddings = _frozen(rng.standard_normal((vocab_size, embedding_dim)))
        self.projection = _frozen(
            rng.standard_normal((feature_dim - 1, embedding_dim)) * np.sqrt(2.0 / embedding_dim)
        )
        self.bias = _frozen(0.1 * rng.standard_normal(feature_dim - 1))
        self.base_params = _frozen(0.5 * rng.standard_normal(vocab_size * feature_dim))

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(vocab_size={self.vocab_size}, "
            f"feature_dim={self.feature_dim}, seed={self.seed})"
        )

    @property
    def param_dim(self) -> int:
        return self.vocab_size * self.feature_dim

    def _window(self, context: Sequence[int]) -> np.ndarray:
        tokens = list(context)[-self.context_window:]
        padding = [PAD_TOKEN] * (self.context_window - len(tokens))
        return np.asarray(padding + tokens, dtype=int)

    def features(self, context: Sequence[int]) -> np.ndarray:
        pooled = self.embeddings[self._window(context)].mean(axis=0)
        hidden = np.tanh(self.projection @ pooled + self.bias)
        return np.append(hidden, 1.0)

    def features_batch(self, contexts: Sequence[Sequence[int]]) -> np.ndarray:
        """φ for many contexts at once, shape (N, F)."""
        if not contexts:
            return np.zeros((0, self.feature_dim))
        windows = np.stack([self._window(c) for c in contexts])
        pooled = self.embeddings[windows].mean(axis=1)
        hidden = np.tanh(pooled @ self.projection.T + self.bias)
        return np.hstack([hidden, np.ones((len(contexts), 1))])

    def _head(self, params: ArrayLike) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.param_dim,):
            raise DimensionMismatch(f"params has shape {params.shape}, expected ({self.param_dim},)")
        return params.reshape(self.vocab_size, self.feature_dim)

    def _check_target(self, target: int) -> None:
        if not 0 <= target < self.vocab_size:
            raise DimensionMismatch(f"target {target} outside vocabulary of size {self.vocab_size}")

    def logits(self, params: ArrayLike, context: Sequence[int]) -> np.ndarray:
        return self._head(params) @ self.features(context)

    def probabilities(self, params: ArrayLike, context: Sequence[int]) -> np.ndarray:
        return softmax(self.logits(params, context))

    def token_nll(self, params: ArrayLike, context: Sequence[int], target: int) -> float:
        """−log p_θ(target | context); always ≥ 0."""
        self._check_target(target)
        return float(max(-log_softmax(self.logits(params, context))[target], 0.0))

    def token_gradient(self, params: ArrayLike, context: Sequence[int], target: int) -> np.ndarray:
        """Exact ∇_θ of `token_nll`: vec((p − e_target) φᵀ)."""
        self._check_target(target)
        phi = self.features(context)
        residual = softmax(self._head(params) @ phi)
        residual[target] -= 1.0
        return np.outer(residual, phi).ravel()

    def mean_nll(
        self,
        params: ArrayLike,
        contexts: Sequence[Sequence[int]],
        targets: Sequence[int],
    ) -> float:
        if len(contexts) != len(targets):
            raise DimensionMismatch(f"{len(contexts)} contexts but {len(targets)} targets")
        return self.features_nll(params, self.features_batch(contexts), targets)

    def features_nll(self, params: ArrayLike, features: np.ndarray, targets: Sequence[int]) -> float:
        """Average nll given precomputed context features (N, F); nan when empty."""
        if not len(targets):
            return float('nan')
        log_probs = log_softmax(features @ self._head(params).T, axis=1)
        return float(-np.mean(log_probs[np.arange(len(targets)), np.asarray(targets)]))

    def mean_gradient(
        self,
        params: ArrayLike,
        contexts: Sequence[Sequence[int]],
        targets: Sequence[int],
    ) -> np.ndarray:
        """Average `token_gradient` over a batch: vec((P − Y)ᵀΦ)/N; zero when empty."""
        if len(contexts) != len(targets):
            raise DimensionMismatch(f"{len(contexts)} contexts but {len(targets)} targets")
        if not len(targets):
            return np.zeros(self.param_dim)
        features = self.features_batch(contexts)
        residual = softmax(features @ self._head(params).T, axis=1)
        residual[np.arange(len(targets)), np.asarray(targets)] -= 1.0
        return (residual.T @ features).ravel() / len(targets)

    def sample(
        self,
        params: ArrayLike,
        length: int,
        rng: np.random.Generator,
        prefix: Sequence[int] = (),
    ) -> list[int]:
        """Draw `length` tokens autoregressively after `prefix` (prefix not returned)."""
        tokens = list(prefix)
        for _ in range(length):
            tokens.append(int(rng.choice(self.vocab_size, p=self.probabilities(params, tokens))))
        return tokens[len(prefix):]


def context_target_pairs(tokens: Sequence[int]) -> tuple[list[list[int]], list[int]]:
    """Split a token sequence into (tokens[:t], tokens[t]) pairs, t = 0..n−1."""
    tokens = list(tokens)
    return [tokens[:t] for t in range(len(tokens))], tokens
